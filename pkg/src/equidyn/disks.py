"""Holomorphic disks in P^k: area, diameter, annulus modulus, area-diameter ratio.

A ParamDisk maps the closed unit disk of the parameter plane into P^k. Three
kinds are supported: a flat disk in a projective line, a polynomial curve in
C^{k+1}, and a sampled grid of lifted points coming from inverse branches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import proj
from .errors import PreconditionViolated, QuadratureNonConvergent

AREA_RTOL = 0.01
DIAM_GRID = (12, 48)


@dataclass(frozen=True, eq=False)
class ParamDisk:
    """Parametrized disk ``U(zeta)`` for ``|zeta| <= outer_radius``.

    kind ``"polynomial"``: ``coeffs`` has shape (m+1, k+1) and
    ``U(zeta) = sum_j coeffs[j] zeta^j`` (a flat disk is the case m = 1 with
    orthonormal rows). kind ``"grid"``: ``grid`` holds lifted sample points at
    parameters ``grid_zeta``, and only the sampled geometry is available.
    """

    kind: str
    coeffs: np.ndarray | None = None
    grid: np.ndarray | None = None
    grid_zeta: np.ndarray | None = None
    outer_radius: float = 1.0
    inner_radius: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        src = self.coeffs if self.coeffs is not None else self.grid
        return src.shape[-1] - 1

    def points(self, zeta) -> np.ndarray:
        """Canonical rows U(zeta) for an array of parameters."""
        if self.kind == "grid":
            raise ValueError("grid disks cannot be evaluated off their samples")
        zeta = np.atleast_1d(np.asarray(zeta, dtype=complex))
        P = np.zeros(zeta.shape + (self.coeffs.shape[1],), dtype=complex)
        for c in self.coeffs[::-1]:
            P = P * zeta[..., None] + c
        return proj.normalize_rows(P.reshape(-1, P.shape[-1])).reshape(P.shape)

    def tangent_density(self, zeta: np.ndarray) -> np.ndarray:
        """Density of the pulled-back FS form w.r.t. Lebesgue measure in zeta.

        (1/pi) |U ∧ U'|^2 / |U|^4, which is 1/(pi (1+|z|^2)^2) for U = (z, 1).
        """
        zeta = np.asarray(zeta, dtype=complex)
        U = np.zeros(zeta.shape + (self.coeffs.shape[1],), dtype=complex)
        dU = np.zeros_like(U)
        for j, c in enumerate(self.coeffs):
            U = U + c * zeta[..., None] ** j
            if j >= 1:
                dU = dU + j * c * zeta[..., None] ** (j - 1)
        n1 = U.shape[-1]
        wedge = np.zeros(zeta.shape)
        for a in range(n1):
            for b in range(a + 1, n1):
                wedge = wedge + np.abs(U[..., a] * dU[..., b] - U[..., b] * dU[..., a]) ** 2
        nrm2 = np.sum(np.abs(U) ** 2, axis=-1)
        return wedge / (np.pi * nrm2**2)

    def clearance(self, V: np.ndarray, step: float):
        """First point of V closer than 2 grid steps to the disk, else None."""
        if len(V) == 0:
            return None
        nr, na = 24, 96
        zeta = _polar_grid(self.outer_radius, nr, na)
        G = self.points(zeta)
        ds = proj.chordal_rows(self.points(np.array([self.outer_radius / nr])), G[:1])[0]
        dist = proj.chordal_matrix(np.asarray(V), G).min(axis=1)
        # the sampled grid is itself ~ds coarse
        bad = np.nonzero(dist < 2 * step_chordal(self, step) + ds)[0]
        if len(bad):
            return proj.normalize_rows(np.asarray(V)[bad[:1]])[0]
        return None


def step_chordal(disk: ParamDisk, step: float) -> float:
    """Chordal length of a parameter step of size ``step`` at the center."""
    P = disk.points(np.array([0.0, step]))
    return float(proj.chordal_rows(P[:1], P[1:])[0])


def linear_disk(center, direction=None, chordal_radius: float = 0.1, rng=None, inner_fraction: float | None = None) -> ParamDisk:
    """Flat disk of the given chordal radius around ``center`` in a line.

    The line is spanned by ``center`` and ``direction`` (random if omitted).
    For k = 1 the line is all of P^1.
    """
    p = proj.unit_rows(proj.as_rows(center))[0]
    if direction is None:
        rng = np.random.default_rng(0) if rng is None else rng
        direction = rng.standard_normal(len(p)) + 1j * rng.standard_normal(len(p))
    v = np.asarray(proj.as_rows(direction)[0], dtype=complex)
    v = v - np.vdot(p, v) * p
    v = v / np.linalg.norm(v)
    if not 0 < chordal_radius < 1:
        raise PreconditionViolated("chordal radius must lie in (0, 1)")
    s = chordal_radius / math.sqrt(1.0 - chordal_radius**2)
    coeffs = np.stack([p, s * v])
    inner = None if inner_fraction is None else inner_fraction
    return ParamDisk("polynomial", coeffs=coeffs, outer_radius=1.0, inner_radius=inner,
                     meta={"type": "linear", "chordal_radius": chordal_radius})


def polynomial_disk(coeffs, outer_radius: float = 1.0, inner_radius: float | None = None) -> ParamDisk:
    return ParamDisk("polynomial", coeffs=np.asarray(coeffs, dtype=complex),
                     outer_radius=outer_radius, inner_radius=inner_radius)


def grid_disk(points: np.ndarray, zeta: np.ndarray, shape: tuple[int, int], outer_radius: float,
              inner_radius: float | None = None) -> ParamDisk:
    """Disk known only through samples at polar-grid parameters ``zeta``.

    The grid is the center followed by ``shape = (rings, angles)`` samples,
    ring by ring, as produced by inverse-branch continuation.
    """
    return ParamDisk("grid", grid=np.asarray(points), grid_zeta=np.asarray(zeta),
                     outer_radius=outer_radius, inner_radius=inner_radius,
                     meta={"shape": tuple(shape)})


def random_polynomial_disk(rng: np.random.Generator, k: int = 1, degree: int = 2, scale: float = 0.3) -> ParamDisk:
    """Random polynomial disk near a random flat disk (for constant fitting)."""
    base = linear_disk(proj.sample_fs_rows(rng, 1, k)[0], rng=rng, chordal_radius=rng.uniform(0.05, 0.6))
    C = np.zeros((degree + 1, k + 1), dtype=complex)
    C[:2] = base.coeffs
    size = np.linalg.norm(base.coeffs[1])
    for j in range(2, degree + 1):
        C[j] = scale * size * (rng.standard_normal(k + 1) + 1j * rng.standard_normal(k + 1)) / math.sqrt(2 * (k + 1))
    r = rng.uniform(0.1, 0.8)
    return polynomial_disk(C, outer_radius=1.0, inner_radius=r)


# ---------------------------------------------------------------------------
# grids


def _polar_grid(radius: float, nr: int, na: int) -> np.ndarray:
    rho = np.repeat(np.linspace(radius / nr, radius, nr), na)
    th = np.tile(2 * np.pi * np.arange(na) / na, nr)
    return np.concatenate([[0.0], rho * np.exp(1j * th)])


def grid_diameter(P: np.ndarray, chunk: int = 64) -> np.ndarray:
    """Max pairwise chordal distance within each sample set of P (B, G, k+1)."""
    P = np.asarray(P)
    if P.ndim == 2:
        P = P[None]
    B, G, _ = P.shape
    out = np.zeros(B)
    U = proj.unit_rows(P)
    for s in range(0, B, chunk):
        Ub = U[s : s + chunk]
        Gm = np.einsum("bgi,bhi->bgh", Ub, np.conj(Ub))
        d2 = np.clip(1.0 - np.abs(Gm) ** 2, 0.0, 1.0)
        out[s : s + chunk] = np.sqrt(d2.max(axis=(1, 2)))
    return out


def _grid_samples(disk: ParamDisk, radius: float, nr: int, na: int) -> np.ndarray:
    if disk.kind == "grid":
        keep = np.abs(disk.grid_zeta) <= radius * (1 + 1e-12)
        return disk.grid[keep]
    return disk.points(_polar_grid(radius, nr, na))


# ---------------------------------------------------------------------------
# area, diameter, modulus


def _area_quadrature(disk: ParamDisk, radius: float, nr: int, na: int) -> float:
    x, w = np.polynomial.legendre.leggauss(nr)
    rho = 0.5 * radius * (x + 1)
    wr = 0.5 * radius * w
    th = 2 * np.pi * np.arange(na) / na
    Z = rho[:, None] * np.exp(1j * th)[None, :]
    dens = disk.tangent_density(Z)
    return float(np.sum(wr[:, None] * rho[:, None] * dens) * (2 * np.pi / na))


def _grid_triangles(nr: int, na: int) -> np.ndarray:
    tris = []
    for j in range(na):
        tris.append((0, 1 + j, 1 + (j + 1) % na))
    for i in range(nr - 1):
        a0 = 1 + i * na
        b0 = 1 + (i + 1) * na
        for j in range(na):
            jn = (j + 1) % na
            tris.append((a0 + j, b0 + j, b0 + jn))
            tris.append((a0 + j, b0 + jn, a0 + jn))
    return np.array(tris)


def triangulated_area(points: np.ndarray, nr: int, na: int) -> float:
    """FS area of a polar-grid surface via triangles in the projector embedding.

    The embedding x -> x x^H maps P^1 onto a round sphere of area 2π, so
    embedded area divided by 2π is the normalized FS area.
    """
    E = projector_real(points)
    T = _grid_triangles(nr, na)
    a = E[T[:, 1]] - E[T[:, 0]]
    b = E[T[:, 2]] - E[T[:, 0]]
    aa = np.sum(a * a, axis=1)
    bb = np.sum(b * b, axis=1)
    ab = np.sum(a * b, axis=1)
    area = 0.5 * np.sqrt(np.clip(aa * bb - ab**2, 0.0, None))
    return float(area.sum() / (2 * np.pi))


def projector_real(points: np.ndarray) -> np.ndarray:
    return proj.projector_embedding(points)


def disk_area(disk: ParamDisk, radius: float | None = None, levels: int = 6) -> float:
    """Normalized FS area of the image of ``|zeta| <= radius``.

    The quadrature is refined until two consecutive levels agree within 1%.
    """
    radius = disk.outer_radius if radius is None else radius
    if radius > disk.outer_radius * (1 + 1e-12):
        raise PreconditionViolated("radius exceeds the disk's outer radius")
    if disk.kind == "grid":
        return _grid_area(disk, radius)
    nr, na = 16, 32
    prev = _area_quadrature(disk, radius, nr, na)
    for _ in range(levels):
        nr, na = 2 * nr, 2 * na
        cur = _area_quadrature(disk, radius, nr, na)
        if abs(cur - prev) <= AREA_RTOL * max(abs(cur), 1e-300):
            return cur
        prev = cur
    raise QuadratureNonConvergent(f"area did not settle within {AREA_RTOL:.0%}", last=prev)


def _grid_area(disk: ParamDisk, radius: float) -> float:
    nr, na = disk.meta["shape"]
    mask = np.abs(disk.grid_zeta) <= radius * (1 + 1e-12)
    rings = (int(mask.sum()) - 1) // na
    return triangulated_area(disk.grid[: 1 + rings * na], rings, na)


def disk_diameter(disk: ParamDisk, radius: float | None = None, grid: tuple[int, int] = DIAM_GRID) -> float:
    radius = disk.outer_radius if radius is None else radius
    P = _grid_samples(disk, radius, *grid)
    if len(P) <= 1:
        return 0.0
    return float(grid_diameter(P)[0])


def annulus_modulus(r: float, R: float) -> float:
    if not 0 < r < R:
        raise PreconditionViolated(f"annulus needs 0 < r < R, got r={r}, R={R}")
    return math.log(R / r) / (2 * math.pi)


def area_diameter_check(disk: ParamDisk, r: float, R: float) -> float:
    """Diam(D_r)^2 · mod(r, R) / Area(D_R)."""
    return disk_diameter(disk, r) ** 2 * annulus_modulus(r, R) / disk_area(disk, R)


def linear_ratio(rho: float, x: float) -> float:
    """Closed-form ratio for a flat disk of chordal radius rho and r/R = x."""
    s = rho / math.sqrt(1 - rho**2)
    rr = s * x / math.sqrt(1 + (s * x) ** 2)
    diam = 2 * rr * math.sqrt(1 - rr**2)
    return diam**2 * (math.log(1 / x) / (2 * math.pi)) / rho**2


LINEAR_BASELINE = 1.0 / (math.pi * math.e)  # sup of linear_ratio as rho -> 0


# ---------------------------------------------------------------------------
# inverse-branch experiment


def postcritical_degree(k: int, d: int) -> int:
    """Degree bound tau of V = f(C) used in the branch-count estimate.

    k = 1: the 2(d-1) critical values. k = 2: C has degree 3(d-1) and its
    image has degree at most d·3(d-1).
    """
    if k == 1:
        return 2 * (d - 1)
    return d * (k + 1) * (d - 1)


def choose_l(tau: int, d: int, epsilon: float) -> int:
    """Smallest l with 2 tau d^{-l} (1 - 1/d)^{-1} < epsilon."""
    if not 0 < epsilon < 1:
        raise PreconditionViolated("epsilon must lie in (0, 1)")
    l = 0
    while 2 * tau * d ** (-l) / (1 - 1 / d) >= epsilon:
        l += 1
    return l


def _param_fraction(rho: float, s: float) -> float:
    """Parameter radius at which a flat disk with slope s reaches chordal radius rho."""
    return rho / (s * math.sqrt(1 - rho**2))


def branch_disks(report, shape: tuple[int, int], inner_radius: float | None) -> list[ParamDisk]:
    """Grid disks made of the lifts of every surviving branch."""
    zeta = report.radii * np.exp(1j * report.angles)
    outer = float(report.radii.max())
    return [grid_disk(L, zeta, shape, outer, inner_radius) for L in report.lifts]


def ljubich_experiment(
    f,
    center,
    delta_radius: float,
    tilde_radius: float,
    n_range,
    epsilon: float = 0.1,
    l: int | None = None,
    direction=None,
    grid: tuple[int, int] = (8, 16),
    rng=None,
) -> dict:
    """Inverse branches of f^n on a flat disk avoiding V_l.

    The outer disk has chordal radius ``tilde_radius`` around ``center`` in
    the line spanned with ``direction`` (ignored for k = 1); the inner disk,
    on which diameters are measured, has chordal radius ``delta_radius``
    rounded to a grid ring. For each n the report gives the surviving branch
    count against (1 - epsilon) d^{kn}, diameter quantiles, the fraction of
    branches with diameter <= c_hat d^{-n/2} (c_hat fitted at the smallest n),
    the area-diameter ratios of the branch disks and, for k = 2, the total
    branch area against d^n.
    """
    from . import fiber, parallel

    gen = parallel.as_generator(0 if rng is None else rng)
    if not 0 < delta_radius < tilde_radius < 1:
        raise PreconditionViolated("radii must satisfy 0 < delta_radius < tilde_radius < 1")
    ns = sorted(int(n) for n in n_range)
    k, d = f.k, f.d
    tau = postcritical_degree(k, d)
    if l is None:
        l = choose_l(tau, d, epsilon)
    disk = linear_disk(center, direction, tilde_radius, rng=gen)
    s = tilde_radius / math.sqrt(1 - tilde_radius**2)
    nr, na = grid
    ring = max(1, min(nr - 1, round(_param_fraction(delta_radius, s) * nr)))
    inner = ring / nr
    lines = 64 if k == 1 else math.ceil(1e4 / ((k + 1) * (d - 1)))
    V = fiber.postcritical_rows(f, l, gen, lines=lines)
    hit = disk.clearance(V, 1.0 / nr)
    if hit is not None:
        raise PreconditionViolated(
            "disk meets the postcritical set V_l",
            point=[[float(z.real), float(z.imag)] for z in hit], l=l,
        )
    rows = []
    c_hat = None
    for n in ns:
        rep = fiber.inverse_branches_on_disk(f, n, disk, None, grid, rng=gen)
        diam = rep.diameters_within(inner) if rep.succeeded else np.zeros(0)
        total = d ** (k * n)
        if c_hat is None and len(diam):
            c_hat = float(diam.max() * d ** (n / 2))
        row = {
            "n": n,
            "attempted": total,
            "succeeded": rep.succeeded,
            "target": (1 - epsilon) * total,
            "count_ok": rep.succeeded >= (1 - epsilon) * total,
            "failures": rep.failures,
            "median_diameter": float(np.median(diam)) if len(diam) else None,
            "diameter_quantiles": [float(q) for q in np.quantile(diam, [0.1, 0.5, 0.9])] if len(diam) else [],
            "fraction_within_c_hat": float(np.mean(diam <= c_hat * d ** (-n / 2) * (1 + 1e-12))) if len(diam) else 0.0,
        }
        if n > 0 and rep.succeeded:
            bd = branch_disks(rep, grid, inner)
            row["ratios"] = [area_diameter_check(D, inner, D.outer_radius) for D in bd]
            if k == 2:
                areas = [disk_area(D) for D in bd]
                row["branch_area_sum"] = math.fsum(areas)
                row["area_target"] = float(d ** ((k - 1) * n))
                row["area_ok"] = row["branch_area_sum"] <= row["area_target"] * 1.02
        row["diameters"] = [float(v) for v in diam]
        rows.append(row)
    med = [(r["n"], r["median_diameter"]) for r in rows if r["median_diameter"]]
    slope = float("nan")
    if len(med) >= 2:
        x = np.array([m[0] for m in med], dtype=float)
        y = np.log([m[1] for m in med])
        slope = float(np.polyfit(x, y, 1)[0])
    return {
        "tau": tau,
        "l": l,
        "epsilon": epsilon,
        "inner_parameter_radius": inner,
        "tilde_radius": tilde_radius,
        "postcritical_check": "exact" if k == 1 else "sampled",
        "postcritical_samples": int(len(V)),
        "c_hat": c_hat,
        "diameter_slope": slope,
        "diameter_slope_target": -math.log(d) / 2,
        "table": rows,
    }


def random_family_ratios(count: int, rng=None, k: int = 1) -> np.ndarray:
    """Area-diameter ratios of ``count`` random polynomial disks."""
    from . import parallel

    gen = parallel.as_generator(0 if rng is None else rng)
    out = []
    for g in gen.spawn(count):
        D = random_polynomial_disk(g, k=k)
        out.append(area_diameter_check(D, D.inner_radius, D.outer_radius))
    return np.array(out)
