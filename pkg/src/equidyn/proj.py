"""Projective-space geometry on P^1 and P^2.

Points are stored in homogeneous coordinates. The canonical representative
has max-modulus coordinate equal to 1, and the first coordinate of maximal
modulus is real and nonnegative. Bulk routines operate on ``(N, k+1)``
complex arrays; ``ProjPoint`` is the single-point value type.

The metric is the chordal Fubini-Study distance (sine of the geodesic angle)
and the Kähler form is normalized so that the volume form has total mass 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import DimensionMismatch, ZeroVector

POINT_TOL = 1e-9
_ZERO = 1e-300


@dataclass(frozen=True)
class ProjPoint:
    """A point of P^k in canonical homogeneous coordinates."""

    coords: tuple

    @property
    def k(self) -> int:
        return len(self.coords) - 1

    @property
    def array(self) -> np.ndarray:
        return np.array(self.coords, dtype=complex)

    def isclose(self, other: "ProjPoint", tol: float = POINT_TOL) -> bool:
        return fs_distance(self, other) < tol

    def affine(self, chart: int | None = None) -> np.ndarray:
        """Affine coordinates in ``chart`` (default: the pivot chart)."""
        X = self.array
        c = int(np.argmax(np.abs(X))) if chart is None else chart
        return np.delete(X / X[c], c)

    def __repr__(self) -> str:
        inner = ":".join(f"{c.real:.6g}{c.imag:+.6g}j" for c in self.coords)
        return f"ProjPoint[{inner}]"


@dataclass(frozen=True)
class ChartVector:
    chart_index: int
    affine: tuple

    @property
    def k(self) -> int:
        return len(self.affine)

    def to_point(self) -> ProjPoint:
        return normalize(from_chart(np.array(self.affine, dtype=complex), self.chart_index))


# ---------------------------------------------------------------------------
# array helpers


def as_rows(points) -> np.ndarray:
    """Coerce a ProjPoint, a sequence of ProjPoints or an array to ``(N, k+1)``."""
    if isinstance(points, ProjPoint):
        return points.array[None, :]
    if isinstance(points, np.ndarray):
        X = np.asarray(points, dtype=complex)
        return X[None, :] if X.ndim == 1 else X
    pts = list(points)
    if not pts:
        return np.zeros((0, 0), dtype=complex)
    if isinstance(pts[0], ProjPoint):
        return np.array([p.coords for p in pts], dtype=complex)
    X = np.asarray(pts, dtype=complex)
    return X[None, :] if X.ndim == 1 else X


def pivots(X: np.ndarray) -> np.ndarray:
    return np.argmax(np.abs(X), axis=-1)


def normalize_rows(X: np.ndarray) -> np.ndarray:
    """Canonical representatives of each row of ``X``."""
    X = np.asarray(X, dtype=complex)
    if X.size == 0:
        return X.copy()
    mod = np.abs(X)
    piv = np.argmax(mod, axis=-1)
    top = np.take_along_axis(X, piv[..., None], axis=-1)
    if np.any(np.abs(top) < _ZERO):
        raise ZeroVector("all homogeneous coordinates vanish")
    out = X / top
    # the pivot is exactly 1+0j, no rounding on it
    np.put_along_axis(out, piv[..., None], 1.0 + 0.0j, axis=-1)
    return out


def unit_rows(X: np.ndarray) -> np.ndarray:
    """Rows scaled to unit Euclidean norm (phase left untouched)."""
    n = np.linalg.norm(X, axis=-1, keepdims=True)
    return X / n


def normalize(raw: Sequence[complex] | np.ndarray) -> ProjPoint:
    X = np.asarray(raw, dtype=complex).reshape(1, -1)
    if X.shape[1] < 2:
        raise DimensionMismatch("need at least two homogeneous coordinates")
    Y = normalize_rows(X)[0]
    return ProjPoint(tuple(complex(v) for v in Y))


def points_from_rows(X: np.ndarray) -> list[ProjPoint]:
    Y = normalize_rows(X)
    return [ProjPoint(tuple(complex(v) for v in row)) for row in Y]


def from_chart(z: np.ndarray, chart: int) -> np.ndarray:
    """Homogeneous vector(s) with 1 inserted at position ``chart``."""
    z = np.asarray(z, dtype=complex)
    return np.insert(z, chart, 1.0, axis=-1)


def to_chart(X: np.ndarray, chart) -> np.ndarray:
    """Affine coordinates of rows of ``X`` in the given chart(s).

    ``chart`` may be an integer or an array with one index per row.
    """
    X = np.asarray(X, dtype=complex)
    if np.ndim(chart) == 0:
        return np.delete(X / X[..., chart : chart + 1], chart, axis=-1)
    chart = np.asarray(chart)
    top = np.take_along_axis(X, chart[:, None], axis=1)
    Y = X / top
    keep = np.ones(X.shape, dtype=bool)
    keep[np.arange(X.shape[0]), chart] = False
    return Y[keep].reshape(X.shape[0], X.shape[1] - 1)


def embed_chart(z: np.ndarray, chart: np.ndarray) -> np.ndarray:
    """Inverse of ``to_chart`` for per-row chart indices."""
    z = np.asarray(z, dtype=complex)
    N, k = z.shape
    out = np.empty((N, k + 1), dtype=complex)
    idx = np.arange(k + 1)[None, :]
    chart = np.asarray(chart)[:, None]
    # column j of the affine vector goes to j if j < chart else j+1
    src = idx - (idx > chart)
    src = np.clip(src, 0, k - 1)
    out[:] = np.take_along_axis(z, src, axis=1)
    out[idx == chart] = 1.0
    return out


# ---------------------------------------------------------------------------
# metric


def _check_same_k(x: ProjPoint, y: ProjPoint) -> None:
    if x.k != y.k:
        raise DimensionMismatch(f"points live in P^{x.k} and P^{y.k}")


def fs_distance(x: ProjPoint, y: ProjPoint) -> float:
    _check_same_k(x, y)
    return float(chordal_rows(x.array[None], y.array[None])[0])


def chordal_rows(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Row-wise chordal distance between two equal-shape arrays."""
    X = unit_rows(np.asarray(X, dtype=complex))
    Y = unit_rows(np.asarray(Y, dtype=complex))
    ip = np.abs(np.sum(X * np.conj(Y), axis=-1)) ** 2
    return _sin_from_cos2(ip, X, Y)


def _sin_from_cos2(ip, X, Y):
    # 1 - |<x,y>|^2 loses everything below ~1e-8; use the Plücker form
    # |x ∧ y|^2 = sum_{i<j} |x_i y_j - x_j y_i|^2 which is exact for unit x, y.
    k1 = X.shape[-1]
    s = np.zeros(X.shape[:-1])
    for i in range(k1):
        for j in range(i + 1, k1):
            s = s + np.abs(X[..., i] * Y[..., j] - X[..., j] * Y[..., i]) ** 2
    return np.sqrt(np.clip(s, 0.0, 1.0))


def chordal_matrix(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Pairwise chordal distances, shape ``(len(X), len(Y))``."""
    Xu = unit_rows(np.asarray(X, dtype=complex))
    Yu = unit_rows(np.asarray(Y, dtype=complex))
    return _sin_from_cos2(None, Xu[:, None, :], Yu[None, :, :])


def chordal_sq_matrix_fast(Xu: np.ndarray, Yu: np.ndarray) -> np.ndarray:
    """1 - |<x,y>|^2 for unit rows; fast but only accurate to ~1e-16 absolute."""
    G = Xu @ np.conj(Yu).T
    return np.clip(1.0 - (G.real**2 + G.imag**2), 0.0, 1.0)


def projector_embedding(X: np.ndarray) -> np.ndarray:
    """Real embedding x -> x x^H / |x|^2; Frobenius distance = sqrt(2)·chordal."""
    U = unit_rows(np.asarray(X, dtype=complex))
    P = U[:, :, None] * np.conj(U[:, None, :])
    flat = P.reshape(len(U), -1)
    return np.concatenate([flat.real, flat.imag], axis=1)


def cluster_labels(X: np.ndarray, tol: float) -> np.ndarray:
    """Connected components of the graph ``chordal(x_i, x_j) < tol``."""
    N = len(X)
    if N == 0:
        return np.zeros(0, dtype=int)
    tree = cKDTree(projector_embedding(X))
    pairs = tree.query_pairs(math.sqrt(2.0) * tol, output_type="ndarray")
    if len(pairs) == 0:
        return np.arange(N)
    g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(N, N))
    _, labels = connected_components(g, directed=False)
    # relabel in order of first appearance so results are order-stable
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(first)
    remap = np.empty_like(order)
    remap[order] = np.arange(len(order))
    return remap[labels]


# ---------------------------------------------------------------------------
# Fubini-Study form


def fs_form_affine(Z: np.ndarray) -> np.ndarray:
    """Normalized Fubini-Study matrices at affine points ``Z`` of shape (N, k).

    H = [(1+|z|^2) I - conj(z) z^T] / (pi (1+|z|^2)^2); the volume density of
    omega^k with respect to Lebesgue measure on C^k is k!·det H.
    """
    Z = np.asarray(Z, dtype=complex)
    N, k = Z.shape
    s = 1.0 + np.sum(np.abs(Z) ** 2, axis=1)
    H = s[:, None, None] * np.eye(k)[None] - np.conj(Z)[:, :, None] * Z[:, None, :]
    return H / (np.pi * s[:, None, None] ** 2)


def fs_form(x: ChartVector | Sequence[complex]) -> np.ndarray:
    z = np.array(x.affine if isinstance(x, ChartVector) else x, dtype=complex)
    return fs_form_affine(z[None, :])[0]


def fs_form_at(X: np.ndarray, chart=None) -> np.ndarray:
    """FS matrices at homogeneous rows ``X`` in the given (or pivot) charts."""
    X = np.asarray(X, dtype=complex)
    c = pivots(X) if chart is None else chart
    return fs_form_affine(to_chart(X, c))


def volume_density(H: np.ndarray) -> np.ndarray:
    k = H.shape[-1]
    return math.factorial(k) * np.real(np.linalg.det(H))


def sample_fs_volume(rng: np.random.Generator, n: int, k: int = 1) -> list[ProjPoint]:
    if n <= 0:
        return []
    return points_from_rows(sample_fs_rows(rng, n, k))


def sample_fs_rows(rng: np.random.Generator, n: int, k: int = 1) -> np.ndarray:
    """Canonical rows distributed by the FS volume (uniform on S^{2k+1}, projected)."""
    if n <= 0:
        return np.zeros((0, k + 1), dtype=complex)
    G = rng.standard_normal((n, k + 1)) + 1j * rng.standard_normal((n, k + 1))
    return normalize_rows(G)


def dedupe_points(points: Iterable[ProjPoint], tol: float = POINT_TOL) -> list[ProjPoint]:
    pts = list(points)
    if not pts:
        return []
    X = as_rows(pts)
    labels = cluster_labels(X, tol)
    _, first = np.unique(labels, return_index=True)
    return [pts[i] for i in sorted(first)]
