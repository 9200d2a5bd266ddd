"""Batched roots of binary forms on P^1.

A binary form of degree D is given by its coefficients on s^D, s^{D-1}t, ...,
t^D. Roots are returned as homogeneous pairs [s:t] so that roots at [1:0]
need no special casing downstream.
"""

from __future__ import annotations

import numpy as np

from . import proj

ABERTH_TOL = 1e-13
ABERTH_MAX_SWEEPS = 200
INF_TOL = 1e-14


def _horner(c: np.ndarray, z: np.ndarray):
    """p(z) and p'(z) for coefficient rows c (highest power first)."""
    p = np.broadcast_to(c[:, :1], z.shape).astype(complex)
    dp = np.zeros_like(z)
    for j in range(1, c.shape[1]):
        dp = dp * z + p
        p = p * z + c[:, j : j + 1]
    return p, dp


def aberth(c: np.ndarray, tol: float = ABERTH_TOL, max_sweeps: int = ABERTH_MAX_SWEEPS):
    """Aberth-Ehrlich iteration on rows of monic-izable polynomials.

    ``c`` has shape (N, n+1) with nonzero leading column. Returns
    ``(roots, converged)`` with roots of shape (N, n).
    """
    c = np.asarray(c, dtype=complex)
    N, n1 = c.shape
    n = n1 - 1
    c = c / c[:, :1]
    centroid = -c[:, 1] / n
    radius = np.abs(c[:, -1]) ** (1.0 / n)
    radius = np.where(radius > 0, radius, 1.0)
    angles = 2 * np.pi * np.arange(n) / n + 0.4
    z = centroid[:, None] + radius[:, None] * np.exp(1j * angles)[None, :]
    active = np.ones(N, dtype=bool)
    converged = np.zeros(N, dtype=bool)
    eye = np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        idx = np.nonzero(active)[0]
        if len(idx) == 0:
            break
        za = z[idx]
        p, dp = _horner(c[idx], za)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = p / dp
            diff = za[:, :, None] - za[:, None, :]
            inv = np.where(eye[None], 0.0, 1.0 / np.where(eye[None], 1.0, diff))
            s = inv.sum(axis=2)
            w = ratio / (1.0 - ratio * s)
        w = np.where(np.isfinite(w), w, 0.0)
        za = za - w
        z[idx] = za
        scale = np.maximum(np.abs(za), 1e-3 * radius[idx, None])
        done = np.all(np.abs(w) <= tol * scale, axis=1)
        exact = np.all(p == 0, axis=1)
        done |= exact
        converged[idx[done]] = True
        active[idx[done]] = False
    return z, converged


def companion_roots(c: np.ndarray) -> np.ndarray:
    c = np.asarray(c, dtype=complex)
    N, n1 = c.shape
    n = n1 - 1
    M = np.zeros((N, n, n), dtype=complex)
    M[:, 0, :] = -c[:, 1:] / c[:, :1]
    if n > 1:
        M[:, np.arange(1, n), np.arange(n - 1)] = 1.0
    return np.linalg.eigvals(M)


def binary_roots(C: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Roots of binary forms.

    Parameters
    ----------
    C : (N, D+1) complex
        Coefficients of s^D ... t^D per row. A row must not vanish identically.

    Returns
    -------
    roots : (N, D, 2) complex
        Homogeneous roots [s:t], canonical representatives.
    used_fallback : (N,) bool
        Rows where Aberth did not converge and companion eigenvalues were used.
    """
    C = np.asarray(C, dtype=complex)
    N, D1 = C.shape
    D = D1 - 1
    scale = np.max(np.abs(C), axis=1, keepdims=True)
    Cn = C / scale
    roots = np.zeros((N, D, 2), dtype=complex)
    fallback = np.zeros(N, dtype=bool)
    # number of roots at [1:0] = number of leading (numerically) zero coefficients
    small = np.abs(Cn) < INF_TOL
    lead = np.argmax(~small, axis=1)
    for m in np.unique(lead):
        rows = np.nonzero(lead == m)[0]
        deg = D - m
        roots[rows, :m, 0] = 1.0
        if deg == 0:
            continue
        c = Cn[rows, m:]
        if deg == 1:
            z = (-c[:, 1] / c[:, 0])[:, None]
        else:
            z, ok = aberth(c)
            bad = ~ok
            if np.any(bad):
                z[bad] = companion_roots(c[bad])
                fallback[rows[bad]] = True
        roots[rows, m:, 0] = z
        roots[rows, m:, 1] = 1.0
    roots = polish_binary(Cn, roots)
    return proj.normalize_rows(roots.reshape(-1, 2)).reshape(N, D, 2), fallback


def eval_binary(C: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Values of forms C (N, D+1) at homogeneous points R (N, M, 2)."""
    D = C.shape[1] - 1
    s = R[..., 0]
    t = R[..., 1]
    out = np.zeros(s.shape, dtype=complex)
    for j in range(D + 1):
        out = out + C[:, j : j + 1] * s ** (D - j) * t**j
    return out


def polish_binary(C: np.ndarray, R: np.ndarray, iters: int = 3) -> np.ndarray:
    """Newton polish in the chart where each root has modulus <= 1.

    A correction is kept only if it lowers the residual.
    """
    C = np.asarray(C, dtype=complex)
    R = proj.normalize_rows(R.reshape(-1, 2)).reshape(R.shape)
    use_s = np.abs(R[..., 1]) >= np.abs(R[..., 0])  # chart t=1, variable s
    # u is the affine coordinate; rev flips coefficient order for the t-variable
    u = np.where(use_s, R[..., 0] / np.where(use_s, R[..., 1], 1), R[..., 1] / np.where(use_s, 1, R[..., 0]))
    Crev = C[:, ::-1]
    for _ in range(iters):
        ps, dps = _horner(C, u)
        pt, dpt = _horner(Crev, u)
        p = np.where(use_s, ps, pt)
        dp = np.where(use_s, dps, dpt)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = p / dp
        step = np.where(np.isfinite(step), step, 0.0)
        unew = u - step
        qs, _ = _horner(C, unew)
        qt, _ = _horner(Crev, unew)
        q = np.where(use_s, qs, qt)
        better = np.abs(q) < np.abs(p)
        u = np.where(better, unew, u)
    out = np.empty_like(R)
    out[..., 0] = np.where(use_s, u, 1.0)
    out[..., 1] = np.where(use_s, 1.0, u)
    return out


def line_restriction_coeffs(g, A: np.ndarray, B: np.ndarray, D: int) -> np.ndarray:
    """Coefficients in (s, t) of the binary form s, t -> g(s·A + t·B).

    ``g`` maps homogeneous rows to values and must be homogeneous of degree D.
    Coefficients are recovered by evaluation at roots of unity and an FFT.
    A and B are (N, k+1) arrays; the result has shape (N, D+1) ordered
    s^D ... t^D.
    """
    M = D + 1
    w = np.exp(2j * np.pi * np.arange(M) / M)
    N = A.shape[0]
    pts = w[None, :, None] * A[:, None, :] + B[:, None, :]
    vals = g(pts.reshape(N * M, -1)).reshape(N, M)
    # vals[j] = sum_e a_e w^{je}, a_e = coefficient of s^e t^{D-e}
    a = np.fft.fft(vals, axis=1) / M
    return a[:, ::-1]
