"""Empirical measures under the pullback operator and the equilibrium measure.

The operator d^{-k} f^* replaces each atom by its fiber with weights
multiplicity / d^k. Its fixed point is the equilibrium measure mu; we build
approximations from pullback trees, from independent backward orbits and
from the Cesàro average of pulled-back volume. Weak-* statements are tested
with a Gaussian-kernel maximum mean discrepancy in the chordal metric.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fiber, parallel, proj
from .empirical import EmpiricalMeasure
from .endo import HomogeneousMap
from .errors import (
    BandwidthInvalid,
    BudgetExceeded,
    ExceptionalStart,
    NonInvariantMeasure,
    OrbitNearCritical,
)
from .proj import POINT_TOL, ProjPoint

DEFAULT_BANDWIDTH = 0.1
BANDWIDTH_SWEEP = (0.05, 0.1, 0.2)
BURN_IN = 20
KERNEL_CHUNK = 2048
ORBIT_SINGULAR_TOL = 1e-12


# ---------------------------------------------------------------------------
# test functions


@dataclass(frozen=True)
class TestFunction:
    """Bounded continuous function on P^k (sup-norm at most 1).

    kinds:
      ``chart-moment``  2 Re(X_j conj(X_i)) / |X|^2 (params: i, j; equals
                         Re z on the unit circle for i=1, j=0 when k=1),
      ``gaussian-bump`` exp(-d(x, center)^2 / 2h^2) (params: center, bandwidth),
      ``coordinate-modulus`` |X_i|^2 / |X|^2 (params: i),
      ``constant``      the constant c with |c| <= 1.
    """

    __test__ = False  # keep pytest from collecting this class

    kind: str
    params: dict = field(default_factory=dict)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=complex)
        n2 = np.sum(np.abs(X) ** 2, axis=1)
        if self.kind == "chart-moment":
            i = self.params.get("i", 1)
            j = self.params.get("j", 0)
            return 2.0 * np.real(X[:, j] * np.conj(X[:, i])) / n2
        if self.kind == "gaussian-bump":
            c = proj.as_rows(self.params["center"])
            h = float(self.params["bandwidth"])
            d = proj.chordal_rows(X, np.broadcast_to(c, X.shape))
            return np.exp(-(d**2) / (2 * h * h))
        if self.kind == "coordinate-modulus":
            i = self.params.get("i", 0)
            return np.abs(X[:, i]) ** 2 / n2
        if self.kind == "constant":
            return np.full(X.shape[0], float(self.params.get("value", 1.0)))
        raise ValueError(f"unknown test function kind {self.kind!r}")


def re_moment() -> TestFunction:
    return TestFunction("chart-moment", {"i": 1, "j": 0})


def bump(center: ProjPoint, bandwidth: float) -> TestFunction:
    return TestFunction("gaussian-bump", {"center": center, "bandwidth": bandwidth})


# ---------------------------------------------------------------------------
# basic measures


def circle_measure(N: int, phase: float = 0.0) -> EmpiricalMeasure:
    """N-th roots of unity (rotated by ``phase``) with equal weights."""
    th = 2 * np.pi * np.arange(N) / N + phase
    X = np.stack([np.exp(1j * th), np.ones(N)], axis=1)
    return EmpiricalMeasure.from_rows(X, provenance="external", merge_tol=None)


def random_circle_measure(N: int, rng) -> EmpiricalMeasure:
    th = 2 * np.pi * parallel.as_generator(rng).random(N)
    X = np.stack([np.exp(1j * th), np.ones(N)], axis=1)
    return EmpiricalMeasure.from_rows(X, provenance="external")


def pullback_operator(
    f: HomogeneousMap, nu: EmpiricalMeasure, budget: int = fiber.DEFAULT_BUDGET, rng=None
) -> EmpiricalMeasure:
    D = f.topological_degree
    if nu.size * D > budget:
        raise BudgetExceeded(f"{nu.size} atoms x {D} preimages exceeds budget {budget}")
    reps, mult, _ = fiber.fiber_rows(f, nu.points, rng)
    keep = mult > 0
    w = (nu.weights[:, None] * mult / D)[keep]
    return EmpiricalMeasure.from_rows(reps[keep], w, provenance=nu.provenance, meta=dict(nu.meta))


def pushforward(f: HomogeneousMap, nu: EmpiricalMeasure) -> EmpiricalMeasure:
    return EmpiricalMeasure.from_rows(f.image_rows(nu.points), nu.weights, provenance=nu.provenance)


def integrate(nu: EmpiricalMeasure, phi: TestFunction) -> float:
    return math.fsum(nu.weights * phi(nu.points))


def fiber_average(f: HomogeneousMap, phi: TestFunction, X: np.ndarray, rng=None) -> np.ndarray:
    """(d^{-k} f_* phi)(x) = d^{-k} sum over f^{-1}(x) of phi, with multiplicity."""
    reps, mult, _ = fiber.fiber_rows(f, X, rng)
    N, D, n1 = reps.shape
    vals = phi(reps.reshape(-1, n1)).reshape(N, D)
    return np.sum(vals * mult, axis=1) / f.topological_degree


# ---------------------------------------------------------------------------
# discrepancy


def _kernel_quadratic(X: np.ndarray, c: np.ndarray, h: float) -> float:
    U = proj.unit_rows(X)
    total = 0.0
    N = len(U)
    for s in range(0, N, KERNEL_CHUNK):
        d2 = proj.chordal_sq_matrix_fast(U[s : s + KERNEL_CHUNK], U)
        K = np.exp(-d2 / (2 * h * h))
        total += float(c[s : s + KERNEL_CHUNK] @ (K @ c))
    return total


def discrepancy(nu1: EmpiricalMeasure, nu2: EmpiricalMeasure, bandwidth: float = DEFAULT_BANDWIDTH) -> float:
    """Kernel MMD with kernel exp(-d^2 / 2h^2) in the chordal metric.

    Atoms of the two measures that coincide at the point tolerance are merged
    into one signed atom first, so identical measures give exactly zero.
    """
    if not bandwidth > 0:
        raise BandwidthInvalid(f"bandwidth must be positive, got {bandwidth}")
    if nu1.k != nu2.k:
        from .errors import DimensionMismatch

        raise DimensionMismatch("measures live on different spaces")
    X = np.concatenate([nu1.points, nu2.points], axis=0)
    c = np.concatenate([nu1.weights, -nu2.weights])
    labels = proj.cluster_labels(X, POINT_TOL)
    n_lab = labels.max() + 1
    if n_lab < len(X):
        _, first = np.unique(labels, return_index=True)
        c = np.bincount(labels, weights=c, minlength=n_lab)
        X = X[first]
    keep = c != 0
    if not np.any(keep):
        return 0.0
    val = _kernel_quadratic(X[keep], c[keep], bandwidth)
    return math.sqrt(max(val, 0.0))


def discrepancy_sweep(nu1, nu2, bandwidths=BANDWIDTH_SWEEP) -> dict:
    return {float(h): discrepancy(nu1, nu2, h) for h in bandwidths}


# ---------------------------------------------------------------------------
# equilibrium measure


def exceptional_cycle_point(f: HomogeneousMap, x: ProjPoint, rng=None) -> bool:
    """True if x lies on a totally invariant cycle of length 1 or 2.

    Checked directly: the fiber of x is a single point p of full multiplicity,
    and either p = x or the fiber of p is x alone.
    """
    X = x.array[None]
    reps, mult, _ = fiber.fiber_rows(f, X, rng)
    pos = mult[0] > 0
    if pos.sum() != 1:
        return False
    p = reps[0][pos]
    if proj.chordal_rows(p, X)[0] < 1e-7:
        return True
    reps2, mult2, _ = fiber.fiber_rows(f, p, rng)
    pos2 = mult2[0] > 0
    return bool(pos2.sum() == 1 and proj.chordal_rows(reps2[0][pos2], X)[0] < 1e-7)


def _check_start(f, x, rng=None) -> None:
    if exceptional_cycle_point(f, x, rng):
        raise ExceptionalStart(
            "start point is totally invariant: its preimages never equidistribute",
            point=[str(c) for c in x.coords],
        )


def tree_measure(f, x: ProjPoint, n: int, budget: int = fiber.DEFAULT_BUDGET, rng=None, check: bool = True):
    if check:
        _check_start(f, x, rng)
    return fiber.pullback_tree(f, x, n, budget, rng)


def backward_measure(
    f: HomogeneousMap,
    samples: int,
    depth: int = 0,
    rng=None,
    burn_in: int = BURN_IN,
    start: ProjPoint | None = None,
    threads: int | None = None,
) -> EmpiricalMeasure:
    """Endpoints of independent backward orbits, equal weights.

    Each orbit starts at an FS-random point (or ``start``) and runs
    ``burn_in + depth`` steps.
    """
    steps = burn_in + depth
    if start is not None:
        _check_start(f, start)

    def run(item):
        (a, b), g = item
        X0 = (
            np.repeat(start.array[None], b - a, axis=0)
            if start is not None
            else proj.sample_fs_rows(g, b - a, f.k)
        )
        solver = np.random.default_rng(g.integers(2**63))
        return fiber.backward_sample_rows(f, X0, steps, g, solver)

    parts = parallel.map_chunks(run, parallel.seeded_chunks(rng, samples), threads)
    X = np.concatenate(parts, axis=0)
    return EmpiricalMeasure.from_rows(
        X, provenance="backward-sample", meta={"samples": samples, "steps": steps}
    )


def cesaro_measure(
    f: HomogeneousMap, n: int, mc_samples: int, rng=None, threads: int | None = None
) -> EmpiricalMeasure:
    """Samples of nu_n = (1/n) sum_{m=1..n} d^{-km} f^{m*} Omega.

    Each sample is an FS-random point pulled back along a random preimage
    chain of uniformly random length m in 1..n.
    """

    def run(item):
        (a, b), g = item
        Y = proj.sample_fs_rows(g, b - a, f.k)
        m = g.integers(1, n + 1, size=b - a)
        solver = np.random.default_rng(g.integers(2**63))
        X = Y.copy()
        for step in range(1, n + 1):
            live = np.nonzero(m >= step)[0]
            if len(live) == 0:
                break
            X[live] = fiber.backward_sample_rows(f, X[live], 1, g, solver)
        return X

    parts = parallel.map_chunks(run, parallel.seeded_chunks(rng, mc_samples), threads)
    return EmpiricalMeasure.from_rows(
        np.concatenate(parts, axis=0), provenance="cesaro", meta={"n": n, "samples": mc_samples}
    )


def equilibrium_measure(f: HomogeneousMap, method: str = "tree", **opts) -> EmpiricalMeasure:
    """Dispatch to ``tree`` (x, n), ``backward`` (samples, depth, rng) or ``cesaro`` (n, mc_samples, rng)."""
    if method == "tree":
        return tree_measure(f, opts["x"], opts["n"], opts.get("budget", fiber.DEFAULT_BUDGET), opts.get("rng"))
    if method == "backward":
        return backward_measure(
            f, opts["samples"], opts.get("depth", 0), opts.get("rng"),
            opts.get("burn_in", BURN_IN), opts.get("start"), opts.get("threads"),
        )
    if method == "cesaro":
        return cesaro_measure(f, opts["n"], opts["mc_samples"], opts.get("rng"), opts.get("threads"))
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# diagnostics


def equidistribution_test(
    f: HomogeneousMap,
    x: ProjPoint,
    y: ProjPoint,
    n_max: int,
    bandwidth: float = DEFAULT_BANDWIDTH,
    allow_exceptional: bool = False,
    rng=None,
) -> list[tuple[int, float]]:
    """Discrepancy between mu_{n,x} and mu_{n,y} for n = 1..n_max."""
    if not allow_exceptional:
        _check_start(f, x, rng)
        _check_start(f, y, rng)
    mx = EmpiricalMeasure.dirac(x, "tree")
    my = EmpiricalMeasure.dirac(y, "tree")
    out = []
    for n in range(1, n_max + 1):
        mx = pullback_operator(f, mx, rng=rng)
        my = pullback_operator(f, my, rng=rng)
        out.append((n, discrepancy(mx, my, bandwidth)))
    return out


def critical_sample(f: HomogeneousMap, rng=None, lines: int = 256) -> np.ndarray:
    return fiber.critical_points_rows(f, rng, lines)


def tube_mass(nu: EmpiricalMeasure, S: np.ndarray, radius: float) -> float:
    """nu-mass of atoms within chordal ``radius`` of the point sample S."""
    if len(S) == 0:
        return 0.0
    d = np.full(nu.size, np.inf)
    for s in range(0, nu.size, KERNEL_CHUNK):
        d[s : s + KERNEL_CHUNK] = proj.chordal_matrix(nu.points[s : s + KERNEL_CHUNK], S).min(axis=1)
    return math.fsum(nu.weights[d <= radius])


def critical_mass_decay(
    f: HomogeneousMap, x: ProjPoint, n_max: int, tau: float = 0.05, rng=None
) -> list[tuple[int, float]]:
    """mu_{n,x}(tube of radius tau around C) for n = 0..n_max."""
    C = critical_sample(f, rng)
    nu = EmpiricalMeasure.dirac(x, "tree")
    out = [(0, tube_mass(nu, C, tau))]
    for n in range(1, n_max + 1):
        nu = pullback_operator(f, nu, rng=rng)
        out.append((n, tube_mass(nu, C, tau)))
    return out


def invariance_defect(f: HomogeneousMap, mu: EmpiricalMeasure, max_atoms: int = 4096, bandwidth: float = DEFAULT_BANDWIDTH) -> float:
    """discrepancy(f_* mu, mu) on an evenly strided subsample of at most max_atoms."""
    stride = max(1, mu.size // max_atoms)
    sub = EmpiricalMeasure.from_rows(mu.points[::stride], mu.weights[::stride], merge_tol=None)
    return discrepancy(pushforward(f, sub), sub, bandwidth)


def mixing_correlation(
    f: HomogeneousMap,
    mu: EmpiricalMeasure,
    phi: TestFunction,
    psi: TestFunction,
    n: int,
    check_invariance: bool = True,
) -> float:
    """|∫ phi · psi∘f^n dmu - ∫ phi dmu ∫ psi dmu|."""
    if check_invariance:
        defect = invariance_defect(f, mu)
        if defect > 0.05:
            warnings.warn(f"measure is not invariant (defect {defect:.3g})", NonInvariantMeasure)
    Y = mu.points
    for _ in range(n):
        Y = f.image_rows(Y)
    a = phi(mu.points)
    b = psi(Y)
    w = mu.weights
    lhs = math.fsum(w * a * b)
    return abs(lhs - math.fsum(w * a) * math.fsum(w * psi(mu.points)))


def _metric_root(H: np.ndarray) -> np.ndarray:
    """S with |S v|^2 = v^T H conj(v), i.e. S = conj(H)^{1/2}."""
    lam, V = np.linalg.eigh(np.conj(H))
    return V @ (np.sqrt(np.clip(lam, 0, None))[..., None] * np.conj(np.swapaxes(V, -1, -2)))


@dataclass(frozen=True)
class LyapunovEstimate:
    min_exponent: float
    max_exponent: float
    std_error: float
    orbits: int
    rejected: int
    per_orbit: np.ndarray

    def to_dict(self) -> dict:
        return {
            "min_exponent": self.min_exponent,
            "max_exponent": self.max_exponent,
            "std_error": self.std_error,
            "orbits": self.orbits,
            "rejected": self.rejected,
        }


def lyapunov_rows(f: HomogeneousMap, X: np.ndarray, n: int):
    """Exponent sums along orbits via QR of metric-corrected chart Jacobians.

    Returns ``(exponents (N, k), singular (N,) bool)``; ``singular`` marks
    orbits meeting the critical locus within ORBIT_SINGULAR_TOL.
    """
    X = proj.normalize_rows(X)
    N, k = X.shape[0], f.k
    Q = np.broadcast_to(np.eye(k, dtype=complex), (N, k, k)).copy()
    acc = np.zeros((N, k))
    singular = np.zeros(N, dtype=bool)
    Y = X
    for _ in range(n):
        J, src, dst, Z = f.chart_jacobian_rows(Y)
        Sx = _metric_root(proj.fs_form_at(Y, src))
        Sy = _metric_root(proj.fs_form_at(Z, dst))
        A = Sy @ J @ np.linalg.inv(Sx)
        Qn, R = np.linalg.qr(A @ Q)
        diag = np.abs(np.diagonal(R, axis1=1, axis2=2))
        singular |= np.prod(diag, axis=1) < ORBIT_SINGULAR_TOL
        acc += np.log(np.maximum(diag, 1e-300))
        Q = Qn
        Y = Z
    return acc / n, singular


def lyapunov_min(
    f: HomogeneousMap, mu: EmpiricalMeasure, n: int, sample_count: int, rng=None, max_resample: int = 10
) -> LyapunovEstimate:
    """Smallest and largest Lyapunov exponents averaged over atoms drawn from mu."""
    gen = parallel.as_generator(rng)
    rejected = 0
    exps = []
    need = sample_count
    for _ in range(max_resample + 1):
        idx = gen.choice(mu.size, size=need, p=mu.weights)
        e, sing = lyapunov_rows(f, mu.points[idx], n)
        rejected += int(sing.sum())
        exps.append(e[~sing])
        need = int(sing.sum())
        if need == 0:
            break
    E = np.concatenate(exps, axis=0)
    if len(E) < sample_count:
        raise OrbitNearCritical(
            f"only {len(E)} of {sample_count} orbits avoid the critical locus", rejected=rejected
        )
    # exponents from QR come ordered only approximately; sort per orbit
    E = np.sort(E, axis=1)
    lo = E[:, 0]
    return LyapunovEstimate(
        float(lo.mean()), float(E[:, -1].mean()), float(lo.std(ddof=1) / math.sqrt(len(lo))) if len(lo) > 1 else 0.0,
        len(lo), rejected, E,
    )


def algebraic_mass(mu: EmpiricalMeasure, kind: str, data, radii) -> list[float]:
    """mu-mass of the chordal tube of each radius around a hyperplane or a point.

    ``kind="hyperplane"`` takes the linear form coefficients a (zero set
    a·X = 0), ``kind="point"`` takes a ProjPoint.
    """
    X = mu.points
    if kind == "hyperplane":
        a = np.asarray(data, dtype=complex)
        d = np.abs(X @ a) / (np.linalg.norm(a) * np.linalg.norm(X, axis=1))
    elif kind == "point":
        p = proj.as_rows(data)
        d = proj.chordal_rows(X, np.broadcast_to(p, X.shape))
    else:
        raise ValueError(f"unknown set kind {kind!r}")
    return [math.fsum(mu.weights[d <= r]) for r in radii]


# ---------------------------------------------------------------------------
# files


def write_measure(path, mu: EmpiricalMeasure, map_hash: str, seed, extra: dict | None = None) -> None:
    """Write the CSV point cloud and its JSON sidecar ``<path>.json``."""
    path = Path(path)
    mu.sorted().to_csv(path)
    side = {
        "provenance": mu.provenance,
        "map_hash": map_hash,
        "seed": seed,
        "atoms": mu.size,
        "n": mu.meta.get("n"),
        "diagnostics": extra or {},
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")
