"""Holomorphic endomorphisms of P^k given by homogeneous polynomials.

A map is k+1 sparse homogeneous polynomials of common degree d. All derivative
information is computed on chart expressions; by default the source chart is
the pivot (max-modulus coordinate) of the point and the target chart is the
pivot of its image, so consecutive steps of an orbit compose directly.
"""

from __future__ import annotations

import hashlib
import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import proj
from .errors import (
    DegenerateImage,
    DegenerateMap,
    IsolationFailure,
    SchemaError,
    UnstableDegree,
)
from .proj import ProjPoint

Term = tuple  # (exponent tuple, complex coefficient)

CRITICAL_TOL = 1e-8


def _poly_eval(E: np.ndarray, c: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Evaluate sum_t c_t X^{E_t} for each row of X."""
    if len(c) == 0:
        return np.zeros(X.shape[0], dtype=complex)
    dmax = int(E.max()) if E.size else 0
    # powers[n, var, e] = X[n, var] ** e
    powers = np.ones((X.shape[0], X.shape[1], dmax + 1), dtype=complex)
    for e in range(1, dmax + 1):
        powers[:, :, e] = powers[:, :, e - 1] * X
    mono = np.ones((X.shape[0], len(c)), dtype=complex)
    for var in range(X.shape[1]):
        mono *= powers[:, var, E[:, var]]
    return mono @ c


@dataclass(frozen=True)
class HomogeneousMap:
    """f = [f_0 : ... : f_k], each f_i a list of (exponents, coefficient)."""

    k: int
    d: int
    components: tuple
    name: str = ""
    _E: tuple = field(init=False, repr=False, compare=False)
    _C: tuple = field(init=False, repr=False, compare=False)
    _dE: tuple = field(init=False, repr=False, compare=False)
    _dC: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.k not in (1, 2):
            raise SchemaError(f"only k=1,2 supported, got k={self.k}")
        if self.d < 1:
            raise SchemaError(f"degree must be positive, got d={self.d}")
        if len(self.components) != self.k + 1:
            raise SchemaError(
                f"expected {self.k + 1} components, got {len(self.components)}"
            )
        comps = []
        for i, comp in enumerate(self.components):
            merged: dict = defaultdict(complex)
            for j, (exps, coef) in enumerate(comp):
                exps = tuple(int(e) for e in exps)
                if len(exps) != self.k + 1:
                    raise SchemaError(
                        f"component {i} term {j}: exponent vector {list(exps)} has wrong length",
                        component=i, term=j,
                    )
                if min(exps) < 0 or sum(exps) != self.d:
                    raise SchemaError(
                        f"component {i} term {j}: exponents {list(exps)} do not sum to d={self.d}",
                        component=i, term=j,
                    )
                merged[exps] += complex(coef)
            comps.append(tuple((e, c) for e, c in merged.items() if c != 0))
        object.__setattr__(self, "components", tuple(comps))
        Es, Cs, dEs, dCs = [], [], [], []
        for comp in comps:
            E = np.array([e for e, _ in comp], dtype=int).reshape(-1, self.k + 1)
            C = np.array([c for _, c in comp], dtype=complex)
            Es.append(E)
            Cs.append(C)
            rowE, rowC = [], []
            for m in range(self.k + 1):
                mask = E[:, m] > 0 if len(E) else np.zeros(0, dtype=bool)
                Em = E[mask].copy()
                Em[:, m] -= 1
                rowE.append(Em)
                rowC.append(C[mask] * E[mask, m])
            dEs.append(tuple(rowE))
            dCs.append(tuple(rowC))
        object.__setattr__(self, "_E", tuple(Es))
        object.__setattr__(self, "_C", tuple(Cs))
        object.__setattr__(self, "_dE", tuple(dEs))
        object.__setattr__(self, "_dC", tuple(dCs))
        self._coef_scale  # validates non-empty

    # -- construction helpers ------------------------------------------------

    @classmethod
    def from_dicts(cls, k: int, d: int, comps: Sequence[dict], name: str = "") -> "HomogeneousMap":
        return cls(k, d, tuple(tuple(c.items()) for c in comps), name=name)

    @property
    def _coef_scale(self) -> float:
        s = sum(float(np.sum(np.abs(C))) for C in self._C)
        if s == 0:
            raise DegenerateMap("all coefficients vanish")
        return s

    @property
    def topological_degree(self) -> int:
        return self.d**self.k

    # -- evaluation --------------------------------------------------------

    def eval_rows(self, X: np.ndarray) -> np.ndarray:
        """Raw homogeneous values F(X), shape (N, k+1)."""
        X = np.asarray(X, dtype=complex)
        return np.stack([_poly_eval(E, C, X) for E, C in zip(self._E, self._C)], axis=1)

    def dF_rows(self, X: np.ndarray) -> np.ndarray:
        """Homogeneous Jacobian dF_i/dX_m, shape (N, k+1, k+1)."""
        X = np.asarray(X, dtype=complex)
        N, n1 = X.shape
        out = np.empty((N, n1, n1), dtype=complex)
        for i in range(n1):
            for m in range(n1):
                out[:, i, m] = _poly_eval(self._dE[i][m], self._dC[i][m], X)
        return out

    def image_rows(self, X: np.ndarray) -> np.ndarray:
        """Canonical images of canonical rows; DegenerateImage if F vanishes."""
        X = proj.normalize_rows(X)
        Y = self.eval_rows(X)
        bad = np.max(np.abs(Y), axis=1) < 1e-14 * self._coef_scale
        if np.any(bad):
            raise DegenerateImage(
                "all components vanish at a point: not an endomorphism",
                index=int(np.argmax(bad)),
            )
        return proj.normalize_rows(Y)

    def iterate_rows(self, X: np.ndarray, n: int) -> np.ndarray:
        Y = proj.normalize_rows(X)
        for _ in range(n):
            Y = self.image_rows(Y)
        return Y

    def orbit_rows(self, X: np.ndarray, n: int) -> np.ndarray:
        """Orbit segments x, f(x), ..., f^{n-1}(x); shape (N, n, k+1)."""
        Y = proj.normalize_rows(X)
        out = np.empty((Y.shape[0], n, Y.shape[1]), dtype=complex)
        for q in range(n):
            out[:, q] = Y
            if q < n - 1:
                Y = self.image_rows(Y)
        return out

    # -- chart derivatives ---------------------------------------------------

    def chart_jacobian_rows(self, X, src=None, dst=None):
        """Chart Jacobians of f at rows X.

        Returns ``(J, src, dst, FX)`` with J of shape (N, k, k) mapping the
        affine chart ``src`` at x to chart ``dst`` at f(x); charts default to
        the pivots. ``FX`` are the canonical images.
        """
        X = proj.normalize_rows(X)
        N = X.shape[0]
        src = proj.pivots(X) if src is None else np.broadcast_to(np.asarray(src), (N,))
        top = np.take_along_axis(X, src[:, None], axis=1)
        Xa = X / top
        FX = self.eval_rows(Xa)
        FXc = proj.normalize_rows(FX)
        dst = proj.pivots(FXc) if dst is None else np.broadcast_to(np.asarray(dst), (N,))
        DF = self.dF_rows(Xa)
        J = _affine_derivative(FX, dst) @ DF @ _selection(src, self.k)
        return J, src, dst, FXc

    def critical_form_rows(self, X: np.ndarray) -> np.ndarray:
        """det dF at raw rows; homogeneous of degree (k+1)(d-1), zero set C."""
        return np.linalg.det(self.dF_rows(np.asarray(X, dtype=complex)))

    # -- misc ----------------------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "k": self.k,
            "d": self.d,
            "components": [
                [
                    {"exps": list(e), "re": float(c.real), "im": float(c.imag)}
                    for e, c in comp
                ]
                for comp in self.components
            ],
        }

    def content_hash(self) -> str:
        blob = json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def compose(self, g: "HomogeneousMap") -> "HomogeneousMap":
        """Coefficient expansion of f∘g (only sensible for small degrees)."""
        if g.k != self.k:
            raise SchemaError("composition of maps on different P^k")
        gpolys = [dict(c) for c in g.components]
        comps = []
        for comp in self.components:
            acc: dict = defaultdict(complex)
            for exps, coef in comp:
                term = {tuple([0] * (self.k + 1)): complex(coef)}
                for var, e in enumerate(exps):
                    for _ in range(e):
                        term = _poly_mul(term, gpolys[var])
                for ee, cc in term.items():
                    acc[ee] += cc
            comps.append({e: c for e, c in acc.items() if abs(c) > 0})
        return HomogeneousMap.from_dicts(self.k, self.d * g.d, comps, name=f"({self.name})o({g.name})")


def _poly_mul(a: dict, b: dict) -> dict:
    out: dict = defaultdict(complex)
    for ea, ca in a.items():
        for eb, cb in b.items():
            out[tuple(x + y for x, y in zip(ea, eb))] += ca * cb
    return dict(out)


def _affine_derivative(Y: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """d(aff_dst)/dY at homogeneous rows Y; shape (N, k, k+1)."""
    N, n1 = Y.shape
    k = n1 - 1
    yb = np.take_along_axis(Y, dst[:, None], axis=1)[:, 0]
    A = np.zeros((N, n1, n1), dtype=complex)
    A[:, np.arange(n1), np.arange(n1)] = (1.0 / yb)[:, None]
    A[np.arange(N), :, dst] -= Y / (yb**2)[:, None]
    # drop row dst (it is identically zero)
    keep = np.ones((N, n1), dtype=bool)
    keep[np.arange(N), dst] = False
    return A[keep].reshape(N, k, n1)


def _selection(src: np.ndarray, k: int) -> np.ndarray:
    """Embedding matrix of chart ``src`` tangent vectors; shape (N, k+1, k)."""
    N = len(src)
    S = np.zeros((N, k + 1, k), dtype=complex)
    for j in range(k):
        rows = j + (j >= src)
        S[np.arange(N), rows, j] = 1.0
    return S


def chart_change_rows(X: np.ndarray, a, b) -> np.ndarray:
    """Jacobian of the transition from chart ``a`` to chart ``b`` at rows X."""
    X = np.asarray(X, dtype=complex)
    N, n1 = X.shape
    a = np.broadcast_to(np.asarray(a), (N,))
    b = np.broadcast_to(np.asarray(b), (N,))
    Xa = X / np.take_along_axis(X, a[:, None], axis=1)
    return _affine_derivative(Xa, b) @ _selection(a, n1 - 1)


# ---------------------------------------------------------------------------
# public operations


def evaluate(f: HomogeneousMap, x: ProjPoint) -> ProjPoint:
    return proj.points_from_rows(f.image_rows(x.array[None]))[0]


def jacobian_chart(f: HomogeneousMap, x: ProjPoint, src=None, dst=None) -> np.ndarray:
    J, *_ = f.chart_jacobian_rows(x.array[None], src, dst)
    return J[0]


def fs_jacobian_rows(f: HomogeneousMap, X: np.ndarray) -> np.ndarray:
    """|det Df| measured in the FS metric (chart independent)."""
    J, src, dst, FX = f.chart_jacobian_rows(X)
    Hx = proj.fs_form_at(proj.normalize_rows(X), src)
    Hy = proj.fs_form_at(FX, dst)
    ratio = np.real(np.linalg.det(Hy)) / np.real(np.linalg.det(Hx))
    return np.abs(np.linalg.det(J)) * np.sqrt(ratio)


def is_critical(f: HomogeneousMap, x: ProjPoint, tol: float = CRITICAL_TOL) -> tuple[bool, float]:
    """Critical-point test using the FS-normalized Jacobian determinant."""
    m = float(fs_jacobian_rows(f, x.array[None])[0])
    return m < tol, m


def iterate_eval(f: HomogeneousMap, n: int, x: ProjPoint) -> ProjPoint:
    return proj.points_from_rows(f.iterate_rows(x.array[None], n))[0]


def iterate_jacobian_rows(f: HomogeneousMap, X: np.ndarray, n: int, src=None, dst=None):
    """Chart Jacobian of f^n by the chain rule along the orbit.

    Returns ``(J, src, dst, FnX)``. Intermediate charts are the orbit pivots.
    """
    X = proj.normalize_rows(X)
    N = X.shape[0]
    k = f.k
    src = proj.pivots(X) if src is None else np.broadcast_to(np.asarray(src), (N,))
    J = np.broadcast_to(np.eye(k, dtype=complex), (N, k, k)).copy()
    Y = X
    cur = src
    for _ in range(n):
        Jq, _, nxt, Y = f.chart_jacobian_rows(Y, src=cur)
        J = Jq @ J
        cur = nxt
    if dst is not None:
        dst = np.broadcast_to(np.asarray(dst), (N,))
        T = chart_change_rows(Y, cur, dst)
        J = T @ J
        cur = dst
    return J, src, cur, Y


def iterate_jacobian(f: HomogeneousMap, n: int, x: ProjPoint, src=None, dst=None) -> np.ndarray:
    J, *_ = iterate_jacobian_rows(f, x.array[None], n, src, dst)
    return J[0]


def pullback_metric_rows(f: HomogeneousMap, X: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Matrices of (f^n)^*omega and omega at rows X in their pivot charts.

    Returns ``(M, H)`` with M = J^T H(f^n x) conj(J).
    """
    X = proj.normalize_rows(X)
    J, src, dst, Y = iterate_jacobian_rows(f, X, n)
    H = proj.fs_form_at(X, src)
    Hy = proj.fs_form_at(Y, dst)
    M = np.swapaxes(J, 1, 2) @ Hy @ np.conj(J)
    return M, H


def mixed_discriminant(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Polarized determinant D(A, B) with D(A, A) = det A.

    k=1: the product of scalars. k=2: (a11 b22 + a22 b11 - a12 b21 - a21 b12)/2,
    so that (i/2 A dz∧dz̄) ∧ (i/2 B dz∧dz̄) = 2 D(A,B) dVol.
    """
    if A.shape[-1] == 1:
        return np.real(A[..., 0, 0] * B[..., 0, 0])
    return 0.5 * np.real(
        A[..., 0, 0] * B[..., 1, 1]
        + A[..., 1, 1] * B[..., 0, 0]
        - A[..., 0, 1] * B[..., 1, 0]
        - A[..., 1, 0] * B[..., 0, 1]
    )


def local_degree(
    f: HomogeneousMap,
    x: ProjPoint,
    probe_radius: float = 1e-3,
    probe_count: int = 3,
    rng: np.random.Generator | None = None,
) -> int:
    """Number of preimages near x of a generic point near f(x)."""
    return int(local_degree_rows(f, x.array[None], probe_radius, probe_count, rng)[0])


def local_degree_rows(
    f: HomogeneousMap,
    X: np.ndarray,
    probe_radius: float = 1e-3,
    probe_count: int = 3,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Batched local degree.

    Probe targets sit at distance max((r/4)^d, 1e-13) from f(x), so a point of local
    degree m has its m nearby preimages at distance about r/4 or less when
    the singularity is of product type; we count fiber multiplicity within r.
    Other preimages of f(x) must lie beyond 3r. When the probe count falls
    below the multiplicity m of x in its own fiber (a curvilinear point whose
    preimages spread like delta^(1/m)), the probes are repeated at distance
    max((r/4)^m, 1e-13).
    """
    from .fiber import fiber_rows

    rng = np.random.default_rng(0) if rng is None else rng
    r = probe_radius
    P = max(3, probe_count)
    X = proj.normalize_rows(proj.as_rows(X))
    N, n1 = X.shape
    Y = f.image_rows(X)
    reps, mult, _ = fiber_rows(f, Y, rng)
    dist = proj.chordal_rows(reps, np.repeat(X[:, None], reps.shape[1], axis=1))
    bad = (mult > 0) & (dist >= r) & (dist <= 3 * r)
    if np.any(bad):
        i = int(np.nonzero(bad.any(axis=1))[0][0])
        dd = float(dist[i][bad[i]][0])
        raise IsolationFailure(
            f"fiber point at distance {dd:.3g} is not isolated at radius {r}", distance=dd, row=i
        )
    base = np.sum(mult * (dist < r), axis=1)
    out = _probe_counts(f, X, Y, np.full(N, max((r / 4.0) ** f.d, 1e-13)), r, P, rng)
    low = np.nonzero(out < base)[0]
    if len(low):
        delta = np.maximum((r / 4.0) ** base[low].astype(float), 1e-13)
        out[low] = _probe_counts(f, X[low], Y[low], delta, r, P, rng)
    return out


def _probe_counts(f, X, Y, delta, r, P, rng) -> np.ndarray:
    from .fiber import fiber_rows

    N, n1 = X.shape
    Yu = proj.unit_rows(Y)
    D = rng.standard_normal((N, P, n1)) + 1j * rng.standard_normal((N, P, n1))
    D -= np.einsum("npi,ni->np", D, np.conj(Yu))[:, :, None] * Yu[:, None, :]
    D /= np.linalg.norm(D, axis=2, keepdims=True)
    T = (Yu[:, None, :] + delta[:, None, None] * D).reshape(-1, n1)
    # only multiplicity-weighted counts within r matter, so no stability check
    preps, pmult, _ = fiber_rows(f, T, rng, check=False)
    Xr = np.repeat(X, P, axis=0)
    pd = proj.chordal_rows(preps, np.repeat(Xr[:, None], preps.shape[1], axis=1))
    counts = np.sum(pmult * (pd < r), axis=1).reshape(N, P)
    out = np.empty(N, dtype=int)
    for i in range(N):
        values, freq = np.unique(counts[i], return_counts=True)
        best = int(np.argmax(freq))
        if freq[best] * 2 <= P or (freq == freq[best]).sum() > 1:
            raise UnstableDegree(f"probes disagree: {counts[i].tolist()}", counts=counts[i].tolist(), row=i)
        out[i] = values[best]
    return out


def check_nondegenerate(f: HomogeneousMap, rng: np.random.Generator | None = None) -> dict:
    """Verify that the components have no common zero besides the origin."""
    if f.k == 1:
        a = _binary_coeffs(f.components[0], f.d)
        b = _binary_coeffs(f.components[1], f.d)
        res = abs(np.linalg.det(_sylvester(a, b)))
        scale = np.linalg.norm(a) ** f.d * np.linalg.norm(b) ** f.d
        rel = res / scale
        if not rel > 1e-12:
            raise DegenerateMap(f"resultant vanishes (relative {rel:.3g})", resultant=float(rel))
        return {"method": "resultant", "relative_resultant": float(rel)}
    from .fiber import fiber_homotopy

    rng = np.random.default_rng(12345) if rng is None else rng
    y = proj.sample_fs_volume(rng, 1, f.k)[0]
    try:
        res = fiber_homotopy(f, y, rng)
    except Exception as exc:  # any solver failure means we cannot certify
        raise DegenerateMap(f"random fiber solve failed: {exc}") from exc
    total = sum(m for _, m in res.points)
    if total != f.d**2:
        raise DegenerateMap(f"random fiber has {total} points, expected {f.d ** 2}")
    return {"method": "homotopy", "paths": f.d**2, "max_residual": float(max(res.residuals))}


def _binary_coeffs(comp, d: int) -> np.ndarray:
    """Coefficients of s^d, s^{d-1} t, ..., t^d for a binary form."""
    out = np.zeros(d + 1, dtype=complex)
    for exps, c in comp:
        out[d - exps[0]] += c
    return out


def _sylvester(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m, n = len(a) - 1, len(b) - 1
    S = np.zeros((m + n, m + n), dtype=complex)
    for i in range(n):
        S[i, i : i + m + 1] = a
    for i in range(m):
        S[n + i, i : i + n + 1] = b
    return S


# ---------------------------------------------------------------------------
# map files


def map_from_json_dict(data: dict, name: str = "") -> HomogeneousMap:
    try:
        k = int(data["k"])
        d = int(data["d"])
        comps_raw = data["components"]
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"missing or invalid top-level field: {exc}") from exc
    if not isinstance(comps_raw, list):
        raise SchemaError("'components' must be a list")
    comps = []
    for i, comp in enumerate(comps_raw):
        terms = []
        if not isinstance(comp, list):
            raise SchemaError(f"component {i} must be a list", component=i)
        for j, t in enumerate(comp):
            try:
                exps = [int(e) for e in t["exps"]]
                coef = complex(float(t.get("re", 0.0)), float(t.get("im", 0.0)))
            except (KeyError, TypeError, ValueError) as exc:
                raise SchemaError(
                    f"component {i} term {j}: invalid field ({exc})", component=i, term=j
                ) from exc
            terms.append((tuple(exps), coef))
        comps.append(tuple(terms))
    return HomogeneousMap(k, d, tuple(comps), name=name)


def dumps_map(f: HomogeneousMap) -> str:
    # repr() of floats round-trips exactly
    return json.dumps(f.to_json_dict(), indent=1)


def loads_map(text: str, name: str = "") -> HomogeneousMap:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON at line {exc.lineno}: {exc.msg}", line=exc.lineno) from exc
    return map_from_json_dict(data, name=name)


def fixed_point_form_p1(g: HomogeneousMap) -> np.ndarray:
    """Binary coefficients (s^{D}..t^{D}) of s·g_1(s,t) - t·g_0(s,t), D = deg g + 1."""
    D = g.d + 1
    a = _binary_coeffs(g.components[0], g.d)
    b = _binary_coeffs(g.components[1], g.d)
    out = np.zeros(D + 1, dtype=complex)
    out[:-1] += b  # s * g1: shifts s-powers up by one
    out[1:] -= a  # t * g0
    return out


def binary_form_coeffs(g: HomogeneousMap, i: int) -> np.ndarray:
    return _binary_coeffs(g.components[i], g.d)
