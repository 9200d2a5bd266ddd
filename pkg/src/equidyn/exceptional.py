"""Degree strata and the exceptional set.

A candidate set A (points or hyperplanes, possibly a 2-cycle of them) is
totally invariant when f^{-1}(A) = A. We test this on samples in two
independent ways, by following fibers of sample points and by comparing the
minimal local degree along A with d^{codim A}, and require both to agree.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import endo, fiber, homotopy, parallel, proj, roots
from .endo import HomogeneousMap
from .errors import (
    CriterionDisagreement,
    EquidynError,
    LemmaViolation,
    PreconditionViolated,
    TooManyExceptional,
)
from .proj import ProjPoint

SAMPLE_COUNT = 20
SET_TOL = 1e-7
FIXED_TOL = 1e-8
MAX_CYCLE = 2


@dataclass(frozen=True, eq=False)
class CandidateSet:
    """A union of points (kind ``point``) or of hyperplanes (``hyperplane``).

    ``data`` holds the defining rows: homogeneous coordinates for points,
    linear-form coefficients for hyperplanes. A ``coordinate-subspace`` is
    stored as a hyperplane (for one index) or a point (for k indices) with
    ``label`` recording the index set.
    """

    kind: str
    data: np.ndarray
    samples: np.ndarray
    label: str = ""

    @property
    def k(self) -> int:
        return self.data.shape[1] - 1

    @property
    def codim(self) -> int:
        return self.k if self.kind == "point" else 1

    @property
    def cycle_length(self) -> int:
        return len(self.data)

    def distance(self, X: np.ndarray) -> np.ndarray:
        """Chordal distance from rows of X to the set."""
        X = np.asarray(X, dtype=complex)
        if self.kind == "point":
            return proj.chordal_matrix(X, self.data).min(axis=1)
        Xn = X / np.linalg.norm(X, axis=1, keepdims=True)
        A = self.data / np.linalg.norm(self.data, axis=1, keepdims=True)
        return np.abs(Xn @ A.T).min(axis=1)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "label": self.label,
            "codim": self.codim,
            "data": [[[float(z.real), float(z.imag)] for z in row] for row in self.data],
        }

    # -- constructors ------------------------------------------------------

    @classmethod
    def points(cls, pts, label: str = "") -> "CandidateSet":
        P = proj.normalize_rows(proj.as_rows(pts))
        return cls("point", P, P.copy(), label)

    @classmethod
    def hyperplanes(cls, forms, rng=None, count: int = SAMPLE_COUNT, label: str = "") -> "CandidateSet":
        A = np.asarray(proj.as_rows(forms), dtype=complex)
        gen = parallel.as_generator(0 if rng is None else rng)
        S = []
        for a in A:
            # orthonormal basis of the kernel of a
            _, _, Vh = np.linalg.svd(a[None, :])
            B = np.conj(Vh[1:])
            c = gen.standard_normal((count, B.shape[0])) + 1j * gen.standard_normal((count, B.shape[0]))
            S.append(c @ B)
        return cls("hyperplane", A, proj.normalize_rows(np.concatenate(S)), label)

    @classmethod
    def coordinate_subspace(cls, indices, k: int, rng=None, count: int = SAMPLE_COUNT) -> "CandidateSet":
        idx = tuple(sorted(indices))
        label = "{" + ",".join(f"X{i}=0" for i in idx) + "}"
        if len(idx) == k:
            p = np.zeros(k + 1, dtype=complex)
            p[[i for i in range(k + 1) if i not in idx][0]] = 1.0
            return cls.points(p[None], label)
        if len(idx) != 1:
            raise PreconditionViolated("coordinate subspaces must be hyperplanes or points")
        a = np.zeros(k + 1, dtype=complex)
        a[idx[0]] = 1.0
        return cls.hyperplanes(a[None], rng, count, label)


@dataclass
class ExceptionalReport:
    verified_components: list = field(default_factory=list)  # (CandidateSet, p, cycle length)
    total_invariance_residuals: list = field(default_factory=list)
    tested: list = field(default_factory=list)  # manifest of (label, verdict)

    def points(self) -> list[ProjPoint]:
        out = []
        for A, _, _ in self.verified_components:
            if A.kind == "point":
                out.extend(proj.points_from_rows(A.data))
        return out

    def by_codim(self, p: int) -> list[CandidateSet]:
        return [A for A, q, _ in self.verified_components if q == p]

    def to_dict(self) -> dict:
        return {
            "components": [
                {**A.to_dict(), "p": p, "cycle_length": L, "residual": r}
                for (A, p, L), r in zip(self.verified_components, self.total_invariance_residuals)
            ],
            "candidates_tested": [{"label": lab, "verdict": v} for lab, v in self.tested],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# strata and degree along sets


def stratum_membership(f: HomogeneousMap, x: ProjPoint, p: int, rng=None) -> bool:
    if not 1 <= p <= f.k:
        raise PreconditionViolated(f"p must lie in 1..{f.k}")
    return endo.local_degree(f, x, rng=rng) >= f.d**p


def degree_along_set(f: HomogeneousMap, A: CandidateSet, rng=None) -> int:
    """Minimal local degree over the samples of A; at most d^{codim A}."""
    gen = parallel.as_generator(0 if rng is None else rng)
    s = int(endo.local_degree_rows(f, A.samples, rng=gen).min())
    bound = f.d**A.codim
    if s > bound:
        raise LemmaViolation(f"degree {s} along {A.label or A.kind} exceeds d^p = {bound}", s=s, bound=bound)
    return s


def _image_residual(f: HomogeneousMap, A: CandidateSet) -> float:
    return float(A.distance(f.image_rows(A.samples)).max())


def totally_invariant(
    f: HomogeneousMap, A: CandidateSet, sample_count: int = SAMPLE_COUNT, rng=None
) -> tuple[bool, float]:
    """Decide f^{-1}(A) = A; returns ``(verdict, residual)``.

    The residual is the largest distance from a fiber point of a sample to
    A (or the invariance defect when f(A) is not inside A).
    """
    gen = parallel.as_generator(0 if rng is None else rng)
    inv = _image_residual(f, A)
    if inv > SET_TOL:
        return False, inv
    S = A.samples
    if A.kind == "hyperplane":
        per = len(S) // A.cycle_length
        S = np.concatenate([S[i * per : i * per + sample_count] for i in range(A.cycle_length)])
    reps, mult, _ = fiber.fiber_rows(f, S, np.random.default_rng(gen.integers(2**63)))
    pts = reps[mult > 0]
    resid = float(A.distance(pts).max())
    set_test = resid < SET_TOL
    sub = CandidateSet(A.kind, A.data, S, A.label)
    degree_test = degree_along_set(f, sub, gen) == f.d**A.codim
    if set_test != degree_test:
        raise CriterionDisagreement(
            f"fiber test says {set_test}, degree test says {degree_test} for {A.label or A.kind}",
            residual=resid,
        )
    return set_test, resid


# ---------------------------------------------------------------------------
# P^1


def fixed_points_p1(g: HomogeneousMap) -> np.ndarray:
    C = endo.fixed_point_form_p1(g)
    R, _ = roots.binary_roots(C[None])
    labels = proj.cluster_labels(R[0], 1e-6)
    _, first = np.unique(labels, return_index=True)
    return R[0][np.sort(first)]


def exceptional_p1(f: HomogeneousMap, rng=None) -> ExceptionalReport:
    """Totally invariant points (cycles of length <= 2) of a map of P^1."""
    if f.k != 1:
        raise PreconditionViolated("exceptional_p1 needs k = 1")
    gen = parallel.as_generator(0 if rng is None else rng)
    pool = np.concatenate([fixed_points_p1(f), fixed_points_p1(f.compose(f))])
    labels = proj.cluster_labels(pool, 1e-6)
    _, first = np.unique(labels, return_index=True)
    pool = pool[np.sort(first)]
    report = ExceptionalReport()
    seen = np.zeros((0, 2), dtype=complex)
    for x in proj.points_from_rows(pool):
        label = repr(x)
        crit, _ = endo.is_critical(f, x, tol=1e-6)
        if not crit:
            report.tested.append((label, "not critical"))
            continue
        cyc = _cycle_p(f, x)
        if cyc is None:
            report.tested.append((label, "no short cycle"))
            continue
        if len(seen) and proj.chordal_matrix(cyc, seen).min() < 1e-6:
            continue
        A = CandidateSet.points(cyc, label="{" + ", ".join(repr(p) for p in proj.points_from_rows(cyc)) + "}")
        ok, resid = totally_invariant(f, A, rng=gen)
        report.tested.append((label, "verified" if ok else "rejected"))
        if ok:
            report.verified_components.append((A, 1, A.cycle_length))
            report.total_invariance_residuals.append(resid)
            seen = np.concatenate([seen, A.data])
    if len(seen) > 2:
        raise TooManyExceptional(f"{len(seen)} totally invariant points (at most 2 exist)", count=len(seen))
    return report


def _cycle_p(f: HomogeneousMap, x: ProjPoint) -> np.ndarray | None:
    X = x.array[None]
    Y = f.image_rows(X)
    if proj.chordal_rows(X, Y)[0] < FIXED_TOL * 10:
        return X
    Z = f.image_rows(Y)
    if MAX_CYCLE >= 2 and proj.chordal_rows(X, Z)[0] < FIXED_TOL * 10:
        return np.concatenate([X, Y])
    return None


# ---------------------------------------------------------------------------
# P^2


def fixed_points_p2(g: HomogeneousMap, rng=None) -> np.ndarray:
    """Fixed points of a map of P^2 by homotopy on two random minors.

    X is fixed iff X ∧ g(X) = 0; we solve det[a; X; g(X)] = det[b; X; g(X)] = 0
    (degree d+1 each) and discard the spurious solutions with X ∧ g(X) ≠ 0.
    """
    gen = parallel.as_generator(0 if rng is None else rng)
    D = g.d + 1
    P = D * D
    a = gen.standard_normal(3) + 1j * gen.standard_normal(3)
    b = gen.standard_normal(3) + 1j * gen.standard_normal(3)

    def G(X, rows):
        F = g.eval_rows(X)
        dF = g.dF_rows(X)
        vals = np.stack([_det3(a, X, F), _det3(b, X, F)], axis=1)
        jac = np.empty((len(X), 2, 3), dtype=complex)
        for r, c in enumerate((a, b)):
            # d/dX det[c; X; F(X)] = (F x c) + dF^T (c x X)
            jac[:, r, :] = np.cross(F, c) + np.einsum("nij,ni->nj", dF, np.cross(c, X))
        return vals, jac

    for _ in range(fiber.HOMOTOPY_RETRIES + 1):
        gam = np.exp(2j * np.pi * gen.random())
        sa = np.exp(2j * np.pi * gen.random())
        sb = np.exp(2j * np.pi * gen.random())
        patch = gen.standard_normal(3) + 1j * gen.standard_normal(3)
        X0 = homotopy.start_solutions(D, sa, sb, patch)
        res = homotopy.track(
            G, D, X0, np.zeros(P, dtype=int), np.full(P, gam), np.full(P, sa), np.full(P, sb),
            np.repeat(patch[None], P, axis=0),
        )
        E = res.endpoints[res.ok]
        if res.ok.all():
            break
    E = proj.normalize_rows(E)
    fixed = proj.chordal_rows(E, g.image_rows(E)) < FIXED_TOL
    E = E[fixed]
    if len(E) == 0:
        return E
    labels = proj.cluster_labels(E, 1e-6)
    _, first = np.unique(labels, return_index=True)
    return E[np.sort(first)]


def _det3(c, X, F):
    return np.einsum("j,nj->n", c, np.cross(X, F))


def _line_through(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Linear form vanishing at p and q (the line joining them)."""
    return np.cross(p, q)


def _image_line(f: HomogeneousMap, A: CandidateSet) -> np.ndarray | None:
    """If f maps the hyperplane samples of A onto a line, its linear form."""
    Y = proj.unit_rows(f.image_rows(A.samples))
    _, s, Vh = np.linalg.svd(Y)
    if s[-1] > 1e-9 * s[0]:
        return None
    return np.conj(Vh[-1])


def _point_cycle_candidate(f, X: np.ndarray, label: str) -> CandidateSet | None:
    Y = f.image_rows(X)
    if proj.chordal_rows(X, Y)[0] < FIXED_TOL * 10:
        return CandidateSet.points(X, label)
    Z = f.image_rows(Y)
    if proj.chordal_rows(X, Z)[0] < FIXED_TOL * 10:
        return CandidateSet.points(np.concatenate([X, Y]), label)
    return None


def _line_cycle_candidate(f, A: CandidateSet, rng) -> CandidateSet | None:
    if _image_residual(f, A) < SET_TOL:
        return A
    a2 = _image_line(f, A)
    if a2 is None:
        return None
    B = CandidateSet.hyperplanes(a2[None], rng)
    back = A.distance(f.image_rows(B.samples)).max()
    if back < SET_TOL:
        return CandidateSet.hyperplanes(np.stack([A.data[0], a2]), rng, label=A.label + "+image")
    return None


def exceptional_candidates_p2(
    f: HomogeneousMap,
    extra_candidates: list | None = None,
    rng=None,
    include_fixed: bool = True,
) -> ExceptionalReport:
    """Verify totally invariant points and lines from a finite candidate pool.

    The pool holds coordinate lines and points, fixed points of f and f^2 of
    local degree d^2 together with the lines joining pairs of them, and any
    user-supplied candidates. Only linear sets are searched.
    """
    if f.k != 2:
        raise PreconditionViolated("exceptional_candidates_p2 needs k = 2")
    gen = parallel.as_generator(0 if rng is None else rng)
    pool: list[CandidateSet] = []
    for i in range(3):
        pool.append(CandidateSet.coordinate_subspace([i], 2, gen))
    for i in range(3):
        pool.append(CandidateSet.coordinate_subspace([j for j in range(3) if j != i], 2, gen))
    if include_fixed:
        fx = np.concatenate([fixed_points_p2(f, gen), fixed_points_p2(f.compose(f), gen)])
        labels = proj.cluster_labels(fx, 1e-6)
        _, first = np.unique(labels, return_index=True)
        fx = fx[np.sort(first)]
        high = []
        for x in proj.points_from_rows(fx):
            try:
                deg = endo.local_degree(f, x, rng=gen)
            except EquidynError:
                continue
            if deg >= f.d**2:
                high.append(x.array)
                pool.append(CandidateSet.points(x.array[None], label=f"fixed {x!r}"))
        # lines joining two fixed points of maximal local degree
        for i in range(len(high)):
            for j in range(i + 1, len(high)):
                a = _line_through(high[i], high[j])
                pool.append(CandidateSet.hyperplanes(a[None], gen, label=f"line through fixed points {i},{j}"))
    pool.extend(extra_candidates or [])

    report = ExceptionalReport()
    seen: list[CandidateSet] = []
    for A in pool:
        label = A.label or A.kind
        if A.kind == "point":
            C = _point_cycle_candidate(f, A.data[:1], label) if A.cycle_length == 1 else A
        else:
            C = _line_cycle_candidate(f, A, gen) if A.cycle_length == 1 else A
        if C is None:
            report.tested.append((label, "not invariant"))
            continue
        if any(_same_set(C, B) for B in seen):
            report.tested.append((label, "duplicate"))
            continue
        try:
            ok, resid = totally_invariant(f, C, rng=gen)
        except CriterionDisagreement as exc:
            report.tested.append((label, f"disagreement: {exc}"))
            continue
        except EquidynError as exc:
            report.tested.append((label, f"solver failure: {exc.code}"))
            continue
        report.tested.append((label, "verified" if ok else "rejected"))
        if ok:
            seen.append(C)
            report.verified_components.append((C, C.codim, C.cycle_length))
            report.total_invariance_residuals.append(resid)
    return report


def _same_set(A: CandidateSet, B: CandidateSet) -> bool:
    if A.kind != B.kind or len(A.data) != len(B.data):
        return False
    if A.kind == "point":
        return bool(B.distance(A.data).max() < 1e-6)
    # hyperplanes: compare the forms as points of the dual plane
    return bool(proj.chordal_matrix(A.data, B.data).min(axis=1).max() < 1e-6)
