"""Fibers f^{-1}(y), pullback trees, backward orbits and inverse branches.

Fibers are computed with multiplicity: nearby roots are merged into clusters
whose sizes are the multiplicities, so every fiber carries total mass d^k.
The batched ``fiber_rows`` is the workhorse; ``fiber_p1``/``fiber_homotopy``
wrap it for single targets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import endo, homotopy, proj, roots
from .empirical import EmpiricalMeasure
from .endo import HomogeneousMap
from .errors import (
    BudgetExceeded,
    CriticalCollision,
    DegenerateForm,
    DiskMeetsPostcritical,
    EquidynError,
    MultiplicityAmbiguity,
    PathFailure,
    StepTooLarge,
)
from .proj import ProjPoint

DEFAULT_SEED = 0x5EED
MERGE_RADIUS = 1e-6
STABILITY_RADII = (1e-5, 1e-7)
RESIDUAL_TOL = 1e-8
DEFAULT_BUDGET = 2**20
HOMOTOPY_RETRIES = 3
NEWTON_MAX_ITERS = 40
LIFT_CRITICAL_TOL = 1e-8
MAX_NEWTON_STEP = 0.2
BRANCH_SPLIT_DEPTH = 8


@dataclass(frozen=True)
class FiberResult:
    points: tuple  # ((ProjPoint, multiplicity), ...)
    residuals: tuple
    solver: str

    @property
    def multiplicity_sum(self) -> int:
        return sum(m for _, m in self.points)


@dataclass(frozen=True)
class BranchGerm:
    base: ProjPoint
    lift: ProjPoint
    depth: int


# ---------------------------------------------------------------------------
# clustering


def _components(A: np.ndarray) -> np.ndarray:
    """Smallest connected index for each vertex; A is (N, D, D) boolean."""
    D = A.shape[-1]
    A = A | np.eye(D, dtype=bool)[None]
    for _ in range(max(1, math.ceil(math.log2(max(D, 2)))) + 1):
        Ai = A.astype(np.int32)
        A = (Ai @ Ai) > 0
    return np.argmax(A, axis=-1)


def _n_clusters(labels: np.ndarray) -> np.ndarray:
    D = labels.shape[-1]
    return np.sum(labels == np.arange(D)[None, :], axis=-1)


def cluster_fibers(R: np.ndarray, radius: float = MERGE_RADIUS, check: bool = True):
    """Merge nearby roots of each fiber.

    Returns ``(reps, mult)``; ``reps[i, j]`` is meaningful where
    ``mult[i, j] > 0``. Raises MultiplicityAmbiguity if the number of
    clusters changes when the radius moves one decade either way.
    """
    N, D, n1 = R.shape
    U = proj.unit_rows(R.reshape(-1, n1)).reshape(N, D, n1)
    dist = proj._sin_from_cos2(None, U[:, :, None, :], U[:, None, :, :])
    labels = _components(dist < radius)
    if check and D > 1:
        base = _n_clusters(labels)
        for r in STABILITY_RADII:
            other = _n_clusters(_components(dist < r))
            bad = np.nonzero(other != base)[0]
            if len(bad):
                raise MultiplicityAmbiguity(
                    f"cluster count changes between radius {radius:g} and {r:g}",
                    row=int(bad[0]),
                )
    mult = np.zeros((N, D), dtype=int)
    reps = np.array(R, dtype=complex)
    for j in range(D):
        members = labels == j
        cnt = members.sum(axis=1)
        mult[:, j] = np.where(labels[:, j] == j, cnt, 0)
        rows = np.nonzero((mult[:, j] > 1))[0]
        if len(rows) == 0:
            continue
        c = proj.pivots(R[rows, j])
        top = np.take_along_axis(R[rows], np.broadcast_to(c[:, None, None], (len(rows), D, 1)), axis=2)
        scaled = R[rows] / top
        m = members[rows][:, :, None]
        reps[rows, j] = (scaled * m).sum(axis=1) / cnt[rows][:, None]
    flat = reps.reshape(-1, n1)
    return proj.normalize_rows(flat).reshape(N, D, n1), mult


# ---------------------------------------------------------------------------
# fibers


def _fiber_p1_rows(f: HomogeneousMap, Y: np.ndarray):
    a = endo.binary_form_coeffs(f, 0)
    b = endo.binary_form_coeffs(f, 1)
    C = a[None, :] * Y[:, 1:2] - b[None, :] * Y[:, 0:1]
    scale = np.abs(a).sum() + np.abs(b).sum()
    zero = np.max(np.abs(C), axis=1) < 1e-14 * scale
    if np.any(zero):
        raise DegenerateForm("fiber form vanishes identically", row=int(np.argmax(zero)))
    R, _ = roots.binary_roots(C)
    return R


def _fiber_homotopy_rows(f: HomogeneousMap, Y: np.ndarray, rng: np.random.Generator):
    N = Y.shape[0]
    D = f.d
    P = D * D
    piv = proj.pivots(Y)
    others = np.array([[j for j in range(3) if j != c] for c in range(3)])[piv]

    def G(X, rows):
        F = f.eval_rows(X)
        dF = f.dF_rows(X)
        c = piv[rows]
        js = others[rows]
        yr = Y[rows]
        yj = np.take_along_axis(yr, js, axis=1)
        yc = np.take_along_axis(yr, c[:, None], axis=1)
        Fc = np.take_along_axis(F, c[:, None], axis=1)
        Fj = np.take_along_axis(F, js, axis=1)
        vals = Fj * yc - yj * Fc
        ar = np.arange(len(rows))
        dFc = dF[ar, c, :]
        dFj = dF[ar[:, None], js, :]
        jac = dFj * yc[:, :, None] - yj[:, :, None] * dFc[:, None, :]
        return vals, jac

    out = np.zeros((N, P, 3), dtype=complex)
    todo = np.arange(N)
    for attempt in range(HOMOTOPY_RETRIES + 1):
        if len(todo) == 0:
            break
        n = len(todo)
        gam = np.exp(2j * np.pi * rng.random(n))
        a = np.exp(2j * np.pi * rng.random(n))
        b = np.exp(2j * np.pi * rng.random(n))
        patch = rng.standard_normal((n, 3)) + 1j * rng.standard_normal((n, 3))
        X0 = np.concatenate(
            [homotopy.start_solutions(D, a[i], b[i], patch[i]) for i in range(n)], axis=0
        )
        rep = np.repeat(np.arange(n), P)
        res = homotopy.track(
            G, D, X0, todo[rep], np.repeat(gam, P), np.repeat(a, P), np.repeat(b, P),
            np.repeat(patch, P, axis=0),
        )
        ends = res.endpoints.reshape(n, P, 3)
        ok = res.ok.reshape(n, P).all(axis=1)
        good_rows = np.nonzero(ok)[0]
        if len(good_rows):
            E = proj.normalize_rows(ends[good_rows].reshape(-1, 3))
            resid = proj.chordal_rows(f.image_rows(E), np.repeat(Y[todo[good_rows]], P, axis=0))
            resid_ok = (resid.reshape(-1, P) < RESIDUAL_TOL).all(axis=1)
            jump_ok = np.ones(len(good_rows), dtype=bool)
            try:
                reps, mult = cluster_fibers(E.reshape(-1, P, 3))
            except MultiplicityAmbiguity:
                reps, mult = None, None
                jump_ok[:] = False
            if mult is not None and np.any(mult > 1):
                # a merged cluster must sit on the critical locus, otherwise two
                # paths jumped onto the same simple root
                ii, jj = np.nonzero(mult > 1)
                jac = endo.fs_jacobian_rows(f, reps[ii, jj])
                for i, val in zip(ii, jac):
                    if val > 1e-5:
                        jump_ok[i] = False
            accept = resid_ok & jump_ok
            out[todo[good_rows[accept]]] = E.reshape(-1, P, 3)[accept]
            done = np.zeros(n, dtype=bool)
            done[good_rows[accept]] = True
        else:
            done = np.zeros(n, dtype=bool)
        todo = todo[~done]
    if len(todo):
        raise PathFailure(
            f"homotopy paths failed after {HOMOTOPY_RETRIES} retries", row=int(todo[0])
        )
    return out


def fiber_rows(
    f: HomogeneousMap, Y: np.ndarray, rng: np.random.Generator | None = None, check: bool = True
):
    """Batched fibers.

    Returns ``(reps, mult, resid)`` of shapes (N, D, k+1), (N, D), (N, D)
    with D = d^k; entries with ``mult == 0`` were merged into a cluster.
    ``check=False`` skips the cluster-stability test.
    """
    Y = proj.normalize_rows(proj.as_rows(Y))
    if Y.shape[0] == 0:
        D = f.topological_degree
        return np.zeros((0, D, f.k + 1), complex), np.zeros((0, D), int), np.zeros((0, D))
    if f.k == 1:
        R = _fiber_p1_rows(f, Y)
    else:
        rng = np.random.default_rng(DEFAULT_SEED) if rng is None else rng
        R = _fiber_homotopy_rows(f, Y, rng)
    reps, mult = cluster_fibers(R, check=check)
    N, D, n1 = reps.shape
    img = f.image_rows(reps.reshape(-1, n1))
    resid = proj.chordal_rows(img, np.repeat(Y, D, axis=0)).reshape(N, D)
    return reps, mult, resid


def _to_result(reps, mult, resid, solver) -> FiberResult:
    pts, res = [], []
    for j in range(len(mult)):
        if mult[j] > 0:
            pts.append((proj.points_from_rows(reps[j : j + 1])[0], int(mult[j])))
            res.append(float(resid[j]))
    return FiberResult(tuple(pts), tuple(res), solver)


def fiber_p1(f: HomogeneousMap, y: ProjPoint) -> FiberResult:
    if f.k != 1:
        raise ValueError("fiber_p1 needs a map of P^1")
    reps, mult, resid = fiber_rows(f, y.array[None])
    return _to_result(reps[0], mult[0], resid[0], "univariate")


def fiber_homotopy(f: HomogeneousMap, y: ProjPoint, rng: np.random.Generator | None = None) -> FiberResult:
    if f.k != 2:
        raise ValueError("fiber_homotopy needs a map of P^2")
    reps, mult, resid = fiber_rows(f, y.array[None], rng)
    return _to_result(reps[0], mult[0], resid[0], "homotopy")


def fiber(f: HomogeneousMap, y: ProjPoint, rng: np.random.Generator | None = None) -> FiberResult:
    return fiber_p1(f, y) if f.k == 1 else fiber_homotopy(f, y, rng)


# ---------------------------------------------------------------------------
# trees and orbits


def preimage_tree_rows(f, X: np.ndarray, n: int, rng=None, budget: int = DEFAULT_BUDGET):
    """All preimages under f^n of each row of X, as (points, integer weights).

    Weights are multiplicity products, summing to d^{kn} per input row.
    """
    D = f.topological_degree
    if D**n * len(X) > budget:
        raise BudgetExceeded(f"d^(kn) = {D ** n} atoms per start point exceeds budget {budget}")
    pts = proj.normalize_rows(proj.as_rows(X))
    num = np.ones(len(pts), dtype=np.int64)
    origin = np.arange(len(pts))
    for level in range(n):
        try:
            reps, mult, _ = fiber_rows(f, pts, rng)
        except EquidynError as exc:
            exc.details.setdefault("level", level + 1)
            raise
        keep = mult > 0
        parent = np.nonzero(keep)[0]
        num = num[parent] * mult[keep]
        origin = origin[parent]
        pts = reps[keep]
    return pts, num, origin


def pullback_tree(
    f: HomogeneousMap, x: ProjPoint, n: int, budget: int = DEFAULT_BUDGET, rng=None
) -> EmpiricalMeasure:
    total = f.topological_degree**n
    pts, num, _ = preimage_tree_rows(f, x.array[None], n, rng, budget)
    # integer bookkeeping: numerators over d^{kn}
    w = num.astype(float) / float(total)
    return EmpiricalMeasure.from_rows(
        pts, w, provenance="tree", meta={"n": n, "start": [str(c) for c in x.coords]}
    )


def _choose(mult: np.ndarray, u: np.ndarray) -> np.ndarray:
    cum = np.cumsum(mult, axis=1)
    target = u * cum[:, -1]
    return np.argmax(cum > target[:, None], axis=1)


def backward_sample_rows(f, X0: np.ndarray, depth: int, rng: np.random.Generator, solver_rng=None):
    """Endpoints of independent backward orbits of length ``depth``.

    At each step the next point is drawn from the fiber with probability
    multiplicity / d^k.
    """
    X = proj.normalize_rows(proj.as_rows(X0))
    for _ in range(depth):
        reps, mult, _ = fiber_rows(f, X, solver_rng)
        idx = _choose(mult, rng.random(len(X)))
        X = reps[np.arange(len(X)), idx]
    return X


def backward_orbit(f: HomogeneousMap, x: ProjPoint, n: int, rng: np.random.Generator) -> list[ProjPoint]:
    orbit = [x]
    X = x.array[None]
    for _ in range(n):
        reps, mult, _ = fiber_rows(f, X, rng if f.k == 2 else None)
        idx = _choose(mult, rng.random(1))
        X = reps[0, idx[0]][None]
        orbit.append(proj.points_from_rows(X)[0])
    return orbit


# ---------------------------------------------------------------------------
# inverse-branch continuation


def _fs_len(z: np.ndarray, H: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.sqrt(np.abs(np.einsum("ni,nij,nj->n", v, H, np.conj(v))))


def lift_step_rows(f: HomogeneousMap, n: int, Z: np.ndarray, W: np.ndarray):
    """Newton-continue lifts Z (f^n(Z) ~ old targets) to new targets W.

    Returns ``(Znew, status)`` with status 0 = ok, 1 = critical collision,
    2 = step too large (Newton failed to contract).
    """
    Z = proj.normalize_rows(Z)
    W = proj.normalize_rows(W)
    P = Z.shape[0]
    src = proj.pivots(Z)
    dst = proj.pivots(W)
    z = proj.to_chart(Z, src)
    w = proj.to_chart(W, dst)
    status = np.zeros(P, dtype=int)
    active = np.ones(P, dtype=bool)
    prev = np.full(P, np.inf)
    for it in range(NEWTON_MAX_ITERS):
        idx = np.nonzero(active)[0]
        if len(idx) == 0:
            break
        Xi = proj.embed_chart(z[idx], src[idx])
        J, _, _, Y = endo.iterate_jacobian_rows(f, Xi, n, src=src[idx], dst=dst[idx])
        r = proj.to_chart(Y, dst[idx]) - w[idx]
        Hx = proj.fs_form_affine(z[idx])
        Hy = proj.fs_form_at(Y, dst[idx])
        fsjac = np.abs(np.linalg.det(J)) * np.sqrt(
            np.real(np.linalg.det(Hy)) / np.real(np.linalg.det(Hx))
        )
        crit = ~(fsjac > LIFT_CRITICAL_TOL)
        if np.any(crit):
            status[idx[crit]] = 1
            active[idx[crit]] = False
        ok = ~crit
        idx, J, r, Hx = idx[ok], J[ok], r[ok], Hx[ok]
        if len(idx) == 0:
            continue
        delta = np.linalg.solve(J, -r[:, :, None])[:, :, 0]
        step = _fs_len(z[idx], Hx, delta) * math.sqrt(math.pi)
        # quadratic convergence gives ratios far below 1/2; a ratio of exactly
        # 1/2 is Newton on a double root, which the criticality test catches
        cstep = np.linalg.norm(delta, axis=1)
        too_big = (cstep > 0.5 * (1 + 1e-6) * prev[idx] + 1e-15) & (it >= 1)
        if it == 0:
            too_big |= step > MAX_NEWTON_STEP
        if np.any(too_big):
            status[idx[too_big]] = 2
            active[idx[too_big]] = False
        good = ~too_big
        gi = idx[good]
        z[gi] = z[gi] + delta[good]
        prev[gi] = cstep[good]
        conv = step[good] < 1e-13
        active[gi[conv]] = False
    status[active] = 2
    Znew = proj.normalize_rows(proj.embed_chart(z, src))
    return Znew, status


def continue_branch(
    f: HomogeneousMap, n: int, path, germ: BranchGerm
) -> list[BranchGerm]:
    """Continue the lift of ``germ`` along ``path`` (first point = germ.base)."""
    path = list(path)
    if not path:
        return []
    out = [BranchGerm(path[0], germ.lift, n)]
    Z = germ.lift.array[None]
    for q, p in enumerate(path[1:], start=1):
        Z, status = lift_step_rows(f, n, Z, p.array[None])
        if status[0] == 1:
            raise CriticalCollision(
                f"lift hits the critical locus of f^{n} at path index {q}", index=q
            )
        if status[0] == 2:
            raise StepTooLarge(f"Newton continuation lost contraction at path index {q}", index=q)
        out.append(BranchGerm(p, proj.points_from_rows(Z)[0], n))
    return out


@dataclass
class BranchReport:
    n: int
    attempted: int
    succeeded: int
    diameters: np.ndarray  # per successful branch, over the full grid
    branch_ids: np.ndarray
    lifts: np.ndarray  # (succeeded, 1 + rings*angles, k+1)
    radii: np.ndarray  # parameter radius of each grid sample
    angles: np.ndarray
    failures: dict = field(default_factory=dict)
    postcritical_check: str = "none"

    @property
    def items(self) -> list[tuple[int, float]]:
        return [(int(i), float(dm)) for i, dm in zip(self.branch_ids, self.diameters)]

    def diameters_within(self, radius: float) -> np.ndarray:
        from .disks import grid_diameter

        mask = self.radii <= radius + 1e-15
        return grid_diameter(self.lifts[:, mask])


def critical_points_rows(f: HomogeneousMap, rng=None, lines: int = 64) -> np.ndarray:
    """Points of the critical locus.

    For k=1 these are all critical points (roots of the binary form det dF).
    For k=2 they are samples: intersections of C with random lines.
    """
    D = (f.k + 1) * (f.d - 1)
    g = f.critical_form_rows
    if f.k == 1:
        A = np.array([[1.0, 0.0]], dtype=complex)
        B = np.array([[0.0, 1.0]], dtype=complex)
        C = roots.line_restriction_coeffs(g, A, B, D)
        R, _ = roots.binary_roots(C)
        return _dedupe(R[0])
    rng = np.random.default_rng(DEFAULT_SEED) if rng is None else rng
    A = rng.standard_normal((lines, 3)) + 1j * rng.standard_normal((lines, 3))
    B = rng.standard_normal((lines, 3)) + 1j * rng.standard_normal((lines, 3))
    C = roots.line_restriction_coeffs(g, A, B, D)
    R, _ = roots.binary_roots(C)
    s, t = R[..., 0], R[..., 1]
    P = s[..., None] * A[:, None, :] + t[..., None] * B[:, None, :]
    return proj.normalize_rows(P.reshape(-1, 3))


def _dedupe(X: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    labels = proj.cluster_labels(X, tol)
    _, first = np.unique(labels, return_index=True)
    return proj.normalize_rows(X[np.sort(first)])


def postcritical_rows(f: HomogeneousMap, l: int, rng=None, lines: int = 64) -> np.ndarray:
    """Union of f^q(C) for q = 1..l (exact for k=1, sampled for k=2)."""
    C = critical_points_rows(f, rng, lines)
    out = []
    Y = C
    for _ in range(l):
        Y = f.image_rows(Y)
        out.append(Y)
    if not out:
        return np.zeros((0, f.k + 1), dtype=complex)
    allp = np.concatenate(out, axis=0)
    return _dedupe(allp) if f.k == 1 else allp


def inverse_branches_on_disk(
    f: HomogeneousMap,
    n: int,
    disk,
    l: int | None = None,
    grid: tuple[int, int] = (8, 16),
    budget: int = DEFAULT_BUDGET,
    rng=None,
) -> BranchReport:
    """Enumerate inverse branches of f^n over a disk by tree continuation.

    Lifts of the disk center are continued along radial grid paths; a branch
    survives if every path continues without a critical collision.
    """
    nr, na = grid
    radii = np.concatenate([[0.0], np.repeat(np.linspace(disk.outer_radius / nr, disk.outer_radius, nr), na)])
    angles = np.concatenate([[0.0], np.tile(2 * np.pi * np.arange(na) / na, nr)])
    zeta = radii * np.exp(1j * angles)
    Wgrid = disk.points(zeta)
    check = "none"
    if l is not None:
        V = postcritical_rows(f, l, rng)
        step = disk.outer_radius / nr
        clearance = disk.clearance(V, step)
        check = "exact" if f.k == 1 else "sampled"
        if clearance is not None:
            raise DiskMeetsPostcritical(
                "disk meets the postcritical set V_l", point=[str(c) for c in clearance], l=l
            )
    center = Wgrid[:1]
    if n == 0:
        lifts = Wgrid[None]
        from .disks import grid_diameter

        return BranchReport(0, 1, 1, grid_diameter(lifts), np.array([0]), lifts, radii, angles, {}, check)
    pts, num, _ = preimage_tree_rows(f, center, n, rng, budget)
    total = f.topological_degree**n
    B = len(pts)
    failures = {"critical_center": int(np.sum(num > 1)), "critical": 0, "step": 0}
    alive = num == 1
    G = len(zeta)
    lifts = np.zeros((B, G, f.k + 1), dtype=complex)
    lifts[:, 0] = pts
    # one continuation row per (branch, angle)
    cur = np.repeat(pts, na, axis=0)
    prev_zeta = np.zeros(B * na, dtype=complex)
    row_ok = np.repeat(alive, na)
    for ring in range(nr):
        target_zeta = np.tile(zeta[1 + ring * na : 1 + (ring + 1) * na], B)
        rows = np.nonzero(row_ok)[0]
        newZ, st = _advance(f, n, disk, cur[rows], prev_zeta[rows], target_zeta[rows], 0)
        cur[rows] = newZ
        bad = rows[st != 0]
        failures["critical"] += int(np.sum(st == 1))
        failures["step"] += int(np.sum(st == 2))
        row_ok[bad] = False
        prev_zeta = target_zeta
        lifts[:, 1 + ring * na : 1 + (ring + 1) * na] = cur.reshape(B, na, -1)
    branch_ok = row_ok.reshape(B, na).all(axis=1) & alive
    from .disks import grid_diameter

    ids = np.nonzero(branch_ok)[0]
    good = lifts[ids]
    return BranchReport(
        n=n,
        attempted=total,
        succeeded=int(num[ids].sum()),
        diameters=grid_diameter(good),
        branch_ids=ids,
        lifts=good,
        radii=radii,
        angles=angles,
        failures=failures,
        postcritical_check=check,
    )


def _advance(f, n, disk, Z, z0, z1, depth):
    """Continue lifts from parameter z0 to z1, bisecting steps that fail."""
    W = disk.points(z1)
    newZ, st = lift_step_rows(f, n, Z, W)
    redo = np.nonzero(st == 2)[0]
    if len(redo) and depth < BRANCH_SPLIT_DEPTH:
        mid = 0.5 * (z0[redo] + z1[redo])
        Zm, s1 = _advance(f, n, disk, Z[redo], z0[redo], mid, depth + 1)
        ok1 = s1 == 0
        Zf = Zm.copy()
        s2 = s1.copy()
        if np.any(ok1):
            i = np.nonzero(ok1)[0]
            Zf[i], s2[i] = _advance(f, n, disk, Zm[i], mid[i], z1[redo][i], depth + 1)
        newZ[redo] = Zf
        st[redo] = s2
    return newZ, st
