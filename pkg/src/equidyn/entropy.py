"""Entropy-side checks.

Dynamical distances and separated sets, Brin-Katok local entropy of an
empirical measure, Monte Carlo volumes of iterated graphs (total and
restricted to a line), the constant-Jacobian test and exact counting of the
symbol sets used in the entropy-gap argument.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import stats

from . import parallel, proj
from .empirical import EmpiricalMeasure
from .endo import HomogeneousMap
from .errors import (
    EmptyBall,
    InsufficientGrowth,
    NoValidPatch,
    PreconditionViolated,
)
from .proj import ProjPoint

SEPARATION_BLOCK = 256
JACOBIAN_FLAG = 0.15


# ---------------------------------------------------------------------------
# orbits and dynamical distance


def orbit_rows(f: HomogeneousMap, X: np.ndarray, n: int) -> np.ndarray:
    """Unit-norm orbit rows of shape (N, n, k+1): x, f(x), ..., f^{n-1}(x)."""
    X = proj.normalize_rows(proj.as_rows(X))
    out = np.empty((X.shape[0], n, X.shape[1]), dtype=complex)
    Y = X
    for q in range(n):
        out[:, q] = proj.unit_rows(Y)
        if q + 1 < n:
            Y = f.image_rows(Y)
    return out


def dyn_distance(f: HomogeneousMap, x: ProjPoint, y: ProjPoint, n: int) -> float:
    """max over 0 <= q < n of the chordal distance between f^q x and f^q y."""
    if n < 1:
        raise PreconditionViolated("n must be >= 1")
    O = orbit_rows(f, np.stack([x.array, y.array]), n)
    return float(proj.chordal_rows(O[0], O[1]).max())


def _close_pairs(A: np.ndarray, B: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs (i, j) with d_n(A_i, B_j) < eps, for unit orbit arrays.

    Pairs are filtered time by time, so only pairs still close are examined.
    """
    e2 = eps * eps
    s2 = 1.0 - np.abs(A[:, 0] @ np.conj(B[:, 0]).T) ** 2
    i, j = np.nonzero(s2 < e2)
    for q in range(1, A.shape[1]):
        if len(i) == 0:
            break
        ip = np.abs(np.sum(A[i, q] * np.conj(B[j, q]), axis=1)) ** 2
        keep = 1.0 - ip < e2
        i, j = i[keep], j[keep]
    return i, j


@dataclass
class SeparatedSetResult:
    n: int
    epsilon: float
    points: list
    cardinality: int
    pool_size: int = 0


def canonical_order(X: np.ndarray) -> np.ndarray:
    """Permutation sorting canonical rows lexicographically (rounded)."""
    R = np.round(proj.normalize_rows(X), 12)
    primary_first = [v for c in range(R.shape[1]) for v in (R[:, c].real, R[:, c].imag)]
    return np.lexsort(primary_first[::-1])


def separated_rows(f: HomogeneousMap, n: int, epsilon: float, candidates, block: int = SEPARATION_BLOCK):
    """Greedy maximal (n, epsilon)-separated subset; returns accepted row indices.

    Candidates are visited in canonical order; one is accepted when its
    dynamical distance to every accepted point is at least epsilon.
    """
    if n < 1:
        raise PreconditionViolated("n must be >= 1")
    X = proj.normalize_rows(proj.as_rows(candidates))
    if X.shape[0] == 0:
        raise PreconditionViolated("candidate pool is empty")
    order = canonical_order(X)
    O = orbit_rows(f, X[order], n)
    accepted: list[int] = []
    acc_orbits = np.zeros((0, n, X.shape[1]), dtype=complex)
    for s in range(0, len(order), block):
        B = O[s : s + block]
        alive = np.ones(len(B), dtype=bool)
        if len(acc_orbits):
            i, _ = _close_pairs(B, acc_orbits, epsilon)
            alive[i] = False
        bi, bj = _close_pairs(B, B, epsilon)
        nbr = [[] for _ in range(len(B))]
        for a, b in zip(bi, bj):
            if b > a:
                nbr[a].append(b)
        new = []
        for a in range(len(B)):
            if alive[a]:
                new.append(a)
                alive[nbr[a]] = False
        accepted.extend(s + a for a in new)
        acc_orbits = np.concatenate([acc_orbits, B[new]])
    return order[np.asarray(accepted, dtype=int)]


def separated_set(f: HomogeneousMap, n: int, epsilon: float, candidates) -> SeparatedSetResult:
    X = proj.normalize_rows(proj.as_rows(candidates))
    idx = separated_rows(f, n, epsilon, X)
    return SeparatedSetResult(n, float(epsilon), proj.points_from_rows(X[idx]), len(idx), len(X))


def _fit(ns, values) -> tuple[float, float, float]:
    """Least-squares slope, its standard error and intercept."""
    ns = np.asarray(ns, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(ns) < 2:
        return float("nan"), float("nan"), float("nan")
    if len(ns) == 2:
        slope = (values[1] - values[0]) / (ns[1] - ns[0])
        return float(slope), 0.0, float(values[0] - slope * ns[0])
    r = stats.linregress(ns, values)
    return float(r.slope), float(r.stderr), float(r.intercept)


def entropy_table(f: HomogeneousMap, n_range, epsilon_list, candidates) -> dict:
    """Separated-set cardinalities and log-slopes for every epsilon.

    Raises InsufficientGrowth when a cardinality exceeds half the pool, since
    the count is then limited by the pool rather than by the dynamics.
    """
    ns = [int(n) for n in n_range]
    if len(ns) < 4:
        raise PreconditionViolated("n_range needs at least 4 values")
    X = proj.normalize_rows(proj.as_rows(candidates))
    pool = X.shape[0]
    rows = []
    for eps in epsilon_list:
        cards = []
        for n in ns:
            c = len(separated_rows(f, n, eps, X))
            if 2 * c > pool:
                raise InsufficientGrowth(
                    f"cardinality {c} at n={n}, eps={eps} saturates a pool of {pool}",
                    n=n, epsilon=float(eps), cardinality=c, pool=pool,
                )
            cards.append(c)
        slope, err, icpt = _fit(ns, np.log(cards))
        rows.append(
            {
                "epsilon": float(eps),
                "n": ns,
                "cardinality": cards,
                "slope": slope,
                "slope_stderr": err,
                "calibration": float(math.exp(icpt)),
            }
        )
    best = max(rows, key=lambda r: r["slope"])
    return {
        "pool_size": pool,
        "table": rows,
        "estimate": best["slope"],
        "target": f.k * math.log(f.d),
    }


def entropy_estimate(f: HomogeneousMap, n_range, epsilon_list, candidates) -> float:
    """Topological entropy estimate in nats per iteration (max slope over epsilon)."""
    return float(entropy_table(f, n_range, epsilon_list, candidates)["estimate"])


# ---------------------------------------------------------------------------
# Brin-Katok


@dataclass
class BrinKatokResult:
    epsilon: float
    n: list
    values: list  # -(1/n) log mu(B_n)
    masses: list
    plateau: float  # least-squares slope of -log mu(B_n) against n
    plateau_stderr: float
    truncated_at: int | None = None

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "n": self.n,
            "values": self.values,
            "ball_mass": self.masses,
            "plateau": self.plateau,
            "plateau_stderr": self.plateau_stderr,
            "truncated_at": self.truncated_at,
        }


def brin_katok(
    f: HomogeneousMap,
    mu: EmpiricalMeasure,
    x: ProjPoint | None,
    epsilon: float,
    n_range,
    rng=None,
) -> BrinKatokResult:
    """-(1/n) log mu(B_n(x, epsilon)) over ``n_range``.

    ``x`` defaults to an atom of mu drawn with its weight. The sequence is cut
    at the first empty ball. The plateau is the slope of -log mu(B_n) in n,
    which removes the O(1/n) bias carried by the ball size at n = 1.
    """
    ns = sorted(int(n) for n in n_range)
    if not ns or ns[0] < 1:
        raise PreconditionViolated("n_range must hold integers >= 1")
    if x is None:
        gen = parallel.as_generator(0 if rng is None else rng)
        x = proj.points_from_rows(mu.points[gen.choice(len(mu), p=mu.weights)][None])[0]
    N = ns[-1]
    O = orbit_rows(f, mu.points, N)
    ox = orbit_rows(f, x.array[None], N)[0]
    e2 = epsilon * epsilon
    inside = np.ones(len(mu), dtype=bool)
    values, masses, used = [], [], []
    truncated = None
    q_done = 0
    for n in ns:
        for q in range(q_done, n):
            ip = np.abs(O[:, q] @ np.conj(ox[q])) ** 2
            inside &= 1.0 - ip < e2
        q_done = n
        m = math.fsum(mu.weights[inside])
        if m <= 0.0:
            truncated = n
            break
        used.append(n)
        masses.append(m)
        values.append(-math.log(m) / n + 0.0)
    if not used:
        raise EmptyBall(f"no atoms in the dynamical ball at n={ns[0]}", n=ns[0])
    if len(used) >= 2:
        slope, err, _ = _fit(used, [-math.log(m) for m in masses])
    else:
        slope, err = values[0], float("nan")
    return BrinKatokResult(float(epsilon), used, values, masses, slope + 0.0, err, truncated)


# ---------------------------------------------------------------------------
# graph volumes


@dataclass
class VolumeEstimate:
    n: int
    value: float
    std_error: float
    sample_count: int
    target: float | None = None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "value": self.value,
            "std_error": self.std_error,
            "sample_count": self.sample_count,
            "target": self.target,
        }


def graph_volume_target(d: int, k: int, n: int) -> float:
    return float(((d**n - 1) // (d - 1)) ** k)


def summed_pullback_rows(f: HomogeneousMap, X: np.ndarray, n: int):
    """Sum over i < n of the matrices of (f^i)^*omega at X, and omega at X.

    Matrices are in the pivot chart of X, with g(v) = v^T M conj(v).
    """
    X = proj.normalize_rows(X)
    N, k = X.shape[0], f.k
    src = proj.pivots(X)
    H0 = proj.fs_form_at(X, src)
    S = H0.copy()
    J = np.broadcast_to(np.eye(k, dtype=complex), (N, k, k)).copy()
    Y, cur = X, src
    for _ in range(1, n):
        Jq, _, cur, Y = f.chart_jacobian_rows(Y, src=cur)
        J = Jq @ J
        Hy = proj.fs_form_at(Y, cur)
        S += np.swapaxes(J, 1, 2) @ Hy @ np.conj(J)
    return S, H0


def _mc_estimate(values: np.ndarray, n: int, target: float | None) -> VolumeEstimate:
    N = len(values)
    mean = math.fsum(values) / N
    err = float(np.std(values, ddof=1) / math.sqrt(N)) if N > 1 else float("inf")
    return VolumeEstimate(n, mean, err, N, target)


def graph_volume(f: HomogeneousMap, n: int, mc_samples: int = 100_000, rng=None, threads=None) -> VolumeEstimate:
    """Monte Carlo volume of the graph of (f, ..., f^{n-1}) in (P^k)^n.

    The volume is the sum over multi-indices of the integrals of
    f^{i_1*}omega ∧ ... ∧ f^{i_k*}omega; by multilinearity of the mixed
    discriminant the summand at x is det(sum_i M_i) / det(H).
    """
    if n < 1:
        raise PreconditionViolated("n must be >= 1")
    gen = parallel.as_generator(0 if rng is None else rng)

    def work(item):
        (a, b), g = item
        X = proj.sample_fs_rows(g, b - a, f.k)
        S, H = summed_pullback_rows(f, X, n)
        return np.real(np.linalg.det(S)) / np.real(np.linalg.det(H))

    vals = np.concatenate(parallel.map_chunks(work, parallel.seeded_chunks(gen, mc_samples), threads))
    return _mc_estimate(vals, n, graph_volume_target(f.d, f.k, n))


@dataclass
class VarietySamples:
    """Points on a curve V with tangent directions and quadrature weights.

    ``weights`` integrate functions against omega restricted to V, so they
    sum to deg V.
    """

    points: np.ndarray
    tangents: np.ndarray  # homogeneous tangent directions
    weights: np.ndarray
    degree: int = 1


def line_samples(form, count: int, rng=None) -> VarietySamples:
    """FS-uniform samples on the line {a . X = 0} of P^2 (degree 1)."""
    a = np.asarray(form, dtype=complex)
    if a.shape != (3,) or np.linalg.norm(a) == 0:
        raise PreconditionViolated("a line of P^2 needs 3 coefficients, not all zero")
    gen = parallel.as_generator(0 if rng is None else rng)
    _, _, Vh = np.linalg.svd(a[None, :])
    B = np.conj(Vh[1:])  # orthonormal basis of the kernel
    c = gen.standard_normal((count, 2)) + 1j * gen.standard_normal((count, 2))
    P = c @ B
    T = np.stack([-np.conj(c[:, 1]), np.conj(c[:, 0])], axis=1) @ B
    return VarietySamples(proj.normalize_rows(P), T, np.full(count, 1.0 / count), 1)


def _chart_tangent(X: np.ndarray, T: np.ndarray, chart: np.ndarray) -> np.ndarray:
    """Chart vector of the curve s -> X + s T at s = 0."""
    N, n1 = X.shape
    xc = X[np.arange(N), chart]
    tc = T[np.arange(N), chart]
    V = (T * xc[:, None] - X * tc[:, None]) / (xc**2)[:, None]
    keep = np.ones((N, n1), dtype=bool)
    keep[np.arange(N), chart] = False
    return V[keep].reshape(N, n1 - 1)


def restricted_graph_volume(
    f: HomogeneousMap, n: int, samples: VarietySamples, target_degree: int | None = None
) -> VolumeEstimate:
    """Monte Carlo of sum_{i<n} ∫_V f^{i*}omega for a curve V in P^2.

    The closed form is deg V · sum_{i<n} d^i.
    """
    if f.k != 2:
        raise PreconditionViolated("restricted_graph_volume needs k = 2")
    if n < 1:
        raise PreconditionViolated("n must be >= 1")
    X = proj.normalize_rows(samples.points)
    S, H = summed_pullback_rows(f, X, n)
    v = _chart_tangent(X, samples.tangents, proj.pivots(X))
    num = np.real(np.einsum("ni,nij,nj->n", v, S, np.conj(v)))
    den = np.real(np.einsum("ni,nij,nj->n", v, H, np.conj(v)))
    w = np.asarray(samples.weights, dtype=float)
    vals = num / den * (w * len(w))
    tau = samples.degree if target_degree is None else target_degree
    return _mc_estimate(vals, n, float(tau * sum(f.d**i for i in range(n))))


def growth_exponents(ns, values) -> dict:
    """Growth rates of a volume sequence.

    ``lov`` is (1/n) log Vol at the largest n, the finite-horizon version of
    limsup (1/n) log Vol; ``slope`` is the least-squares slope of log Vol.
    """
    ns = [int(n) for n in ns]
    logs = np.log(np.asarray(values, dtype=float))
    slope, err, _ = _fit(ns, logs)
    return {"lov": float(logs[-1] / ns[-1]), "slope": slope, "slope_stderr": err}


# ---------------------------------------------------------------------------
# constant Jacobian


@dataclass
class JacobianCheck:
    max_deviation: float
    deviations: list = field(default_factory=list)
    centers: list = field(default_factory=list)
    skipped: int = 0
    radius: float = 0.0

    @property
    def constant(self) -> bool:
        return self.max_deviation < JACOBIAN_FLAG

    def to_dict(self) -> dict:
        return {
            "max_deviation": self.max_deviation,
            "deviations": self.deviations,
            "patches": len(self.deviations),
            "skipped": self.skipped,
            "radius": self.radius,
            "constant_jacobian": self.constant,
            "threshold": JACOBIAN_FLAG,
        }


def jacobian_constant_check(
    f: HomogeneousMap,
    mu: EmpiricalMeasure,
    patch_count: int = 50,
    rng=None,
    radius: float = 0.05,
    mass_floor: float = 1e-3,
) -> JacobianCheck:
    """Compare mu(B) with d^{-k} mu(f(B)) on small balls where f is injective.

    Centers are atoms of mu drawn with their weights. f(B) is the image of
    the ball under the tangent map at the center. Patches whose other fiber
    points come within 3·radius of the center, or with mu(B) below the mass
    floor, are skipped.
    """
    from .fiber import fiber_rows

    gen = parallel.as_generator(0 if rng is None else rng)
    P = mu.points
    idx = gen.choice(len(mu), size=patch_count, p=mu.weights)
    C = P[idx]
    Y = f.image_rows(C)
    reps, mult, _ = fiber_rows(f, Y, gen)
    dist = proj.chordal_rows(reps, np.repeat(C[:, None], reps.shape[1], axis=1))
    own = (mult > 0) & (dist < radius)
    others = (mult > 0) & ~own
    injective = (np.sum(mult * own, axis=1) == 1) & ~np.any(others & (dist < 3 * radius), axis=1)
    J, src, dst, _ = f.chart_jacobian_rows(C)
    H = proj.fs_form_at(C, src)
    Pu = proj.unit_rows(P)
    scale = 1.0 / f.topological_degree
    devs, centers, skipped = [], [], 0
    for i in range(patch_count):
        if not injective[i]:
            skipped += 1
            continue
        cu = proj.unit_rows(C[i : i + 1])[0]
        in_b = 1.0 - np.abs(Pu @ np.conj(cu)) ** 2 < radius**2
        mb = math.fsum(mu.weights[in_b])
        if mb < mass_floor:
            skipped += 1
            continue
        # atoms near f(c), pulled back through the tangent map
        yu = proj.unit_rows(Y[i : i + 1])[0]
        reach = radius * (np.linalg.norm(J[i], 2) + 1.0) * 4.0
        near = np.nonzero(1.0 - np.abs(Pu @ np.conj(yu)) ** 2 < min(reach, 1.0) ** 2)[0]
        m_img = 0.0
        if len(near):
            W = proj.to_chart(P[near], np.full(len(near), dst[i])) - proj.to_chart(Y[i : i + 1], dst[i : i + 1])
            V = np.linalg.solve(J[i], W.T).T
            ln = np.sqrt(np.pi * np.real(np.einsum("ni,ij,nj->n", V, H[i], np.conj(V))))
            m_img = math.fsum(mu.weights[near][ln < radius])
        devs.append(abs(mb - scale * m_img) / mb)
        centers.append(proj.points_from_rows(C[i : i + 1])[0])
    if not devs:
        raise NoValidPatch(f"no valid patch among {patch_count}", skipped=skipped)
    return JacobianCheck(float(max(devs)), [float(v) for v in devs], centers, skipped, radius)


# ---------------------------------------------------------------------------
# counting


def _as_fraction(sigma) -> Fraction:
    if isinstance(sigma, Fraction):
        return sigma
    if isinstance(sigma, float):
        return Fraction(repr(sigma))
    return Fraction(sigma)


def sigma_count(dk: int, n: int, sigma) -> int:
    """Number of words in {1..dk}^n with at least ceil(n·sigma) letters equal to 1."""
    dk, n = int(dk), int(n)
    s = _as_fraction(sigma)
    if dk < 2:
        raise PreconditionViolated("d^k must be >= 2")
    if not Fraction(1, dk) < s <= 1:
        raise PreconditionViolated(f"sigma must lie in (1/{dk}, 1]")
    if n < 0:
        raise PreconditionViolated("n must be >= 0")
    j0 = math.ceil(n * s)
    return sum(math.comb(n, j) * (dk - 1) ** (n - j) for j in range(j0, n + 1))


def sigma_growth(dk: int, ns, sigma) -> list[dict]:
    """log_{dk}(count)/n for each n, computed from exact integers."""
    out = []
    for n in ns:
        c = sigma_count(dk, n, sigma)
        rate = _log_int(c) / (n * math.log(dk)) if n > 0 else 0.0
        out.append({"n": int(n), "count": str(c), "rate": rate})
    return out


def _log_int(c: int) -> float:
    if c <= 0:
        return float("-inf")
    b = c.bit_length()
    shift = max(0, b - 60)
    return math.log(c >> shift) + shift * math.log(2)
