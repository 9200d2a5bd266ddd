"""Vectorized total-degree homotopy continuation for two equations on P^2.

Unknowns are homogeneous X in C^3 restricted to a random affine patch
l·X = 1, so every solution is finite in the patch and no projective endgame
is needed. The start system is X0^D = a X2^D, X1^D = b X2^D and the
homotopy is H(X, t) = (1 - t)·gamma·S(X) + t·G(X). All paths of a batch are
advanced together with per-path step sizes (Euler predictor, Newton
corrector).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

MIN_STEP = 1e-12
MAX_STEP = 0.05
INIT_STEP = 0.01
CORRECTOR_ITERS = 3
CORRECTOR_TOL = 1e-9
ENDGAME_ITERS = 80
# paths are tracked to 1 - T_GAP and finished by Newton at t=1; near a
# singular endpoint the corrector cannot meet CORRECTOR_TOL all the way to 1
T_GAP = 1e-8

# G(X, rows) -> (values (P, 2), jacobian (P, 2, 3)); ``rows`` selects the
# per-path parameters (targets) for the paths being evaluated.
TargetSystem = Callable[[np.ndarray, np.ndarray], tuple]


@dataclass
class TrackResult:
    endpoints: np.ndarray  # (P, 3)
    ok: np.ndarray  # (P,) bool
    steps: np.ndarray  # (P,) int


def start_solutions(D: int, a: complex, b: complex, patch: np.ndarray) -> np.ndarray:
    ra = a ** (1.0 / D)
    rb = b ** (1.0 / D)
    w = np.exp(2j * np.pi * np.arange(D) / D)
    pts = np.array([[ra * wi, rb * wj, 1.0] for wi in w for wj in w], dtype=complex)
    return pts / (pts @ patch)[:, None]


def track(
    G: TargetSystem,
    D: int,
    X0: np.ndarray,
    rows: np.ndarray,
    gamma: np.ndarray,
    a: np.ndarray,
    b: np.ndarray,
    patch: np.ndarray,
    min_step: float = MIN_STEP,
) -> TrackResult:
    """Track paths from t=0 to t=1.

    All per-path parameters (``rows``, ``gamma``, ``a``, ``b``, ``patch``)
    are arrays indexed like the rows of ``X0``.
    """
    P = X0.shape[0]
    X = X0.astype(complex).copy()
    t = np.zeros(P)
    h = np.full(P, INIT_STEP)
    streak = np.zeros(P, dtype=int)
    alive = np.ones(P, dtype=bool)
    done = np.zeros(P, dtype=bool)
    steps = np.zeros(P, dtype=int)

    def system(Xs, ts, idx):
        S, dS = _start_system_rows(Xs, D, a[idx], b[idx])
        Gv, dG = G(Xs, rows[idx])
        g = gamma[idx][:, None]
        tt = ts[:, None]
        Hv = (1 - tt) * g * S + tt * Gv
        Hx = (1 - tt)[:, :, None] * g[:, :, None] * dS + tt[:, :, None] * dG
        Ht = Gv - g * S
        lrow = patch[idx]
        full = np.concatenate([Hx, lrow[:, None, :]], axis=1)
        resid = np.concatenate([Hv, (np.sum(lrow * Xs, axis=1) - 1.0)[:, None]], axis=1)
        return resid, full, Ht

    for _ in range(100000):
        idx = np.nonzero(alive & ~done)[0]
        if len(idx) == 0:
            break
        Xa, ta, ha = X[idx], t[idx], h[idx]
        _, Jf, Ht = system(Xa, ta, idx)
        rhs = -np.concatenate([Ht, np.zeros((len(idx), 1))], axis=1)
        dX = _safe_solve(Jf, rhs)
        tn = np.minimum(ta + ha, 1.0 - T_GAP)
        step = tn - ta
        Xp = Xa + step[:, None] * dX
        ok = np.ones(len(idx), dtype=bool)
        prev = None
        for it in range(CORRECTOR_ITERS):
            r, Jf2, _ = system(Xp, tn, idx)
            delta = _safe_solve(Jf2, -r)
            nd = np.linalg.norm(delta, axis=1) / (1.0 + np.linalg.norm(Xp, axis=1))
            if prev is not None:
                ok &= nd <= 0.5 * prev + 1e-14
            Xp = Xp + delta
            prev = nd
        ok &= np.isfinite(prev) & (prev < CORRECTOR_TOL)
        acc = idx[ok]
        rej = idx[~ok]
        X[acc] = Xp[ok]
        t[acc] = tn[ok]
        steps[acc] += 1
        streak[acc] += 1
        grow = acc[streak[acc] >= 3]
        h[grow] = np.minimum(h[grow] * 2.0, MAX_STEP)
        streak[grow] = 0
        h[rej] *= 0.5
        streak[rej] = 0
        alive[rej[h[rej] < min_step]] = False
        done |= t >= 1.0 - T_GAP
    # endgame: Newton at t=1, keeping the iterate of smallest residual; near a
    # singular root the residual is not monotone along Newton steps
    idx = np.nonzero(done)[0]
    if len(idx):
        Xe = X[idx].copy()
        best = Xe.copy()
        ones = np.ones(len(idx))
        best_res = np.full(len(idx), np.inf)
        live = np.ones(len(idx), dtype=bool)
        for _ in range(ENDGAME_ITERS):
            r, Jf, _ = system(Xe, ones, idx)
            res = np.linalg.norm(r, axis=1)
            better = res < best_res
            best[better] = Xe[better]
            best_res = np.where(better, res, best_res)
            delta = _safe_solve(Jf, -r)
            step = np.linalg.norm(delta, axis=1) / (1.0 + np.linalg.norm(Xe, axis=1))
            live &= np.all(np.isfinite(delta), axis=1) & (res < 1e3 * best_res + 1e-300)
            live &= step > 1e-16
            if not np.any(live):
                break
            Xe[live] = Xe[live] + delta[live]
        X[idx] = best
    return TrackResult(X, done & np.all(np.isfinite(X), axis=1), steps)


def _start_system_rows(X, D, a, b):
    x0, x1, x2 = X[:, 0], X[:, 1], X[:, 2]
    S = np.stack([x0**D - a * x2**D, x1**D - b * x2**D], axis=1)
    dS = np.zeros((X.shape[0], 2, 3), dtype=complex)
    dS[:, 0, 0] = D * x0 ** (D - 1)
    dS[:, 0, 2] = -D * a * x2 ** (D - 1)
    dS[:, 1, 1] = D * x1 ** (D - 1)
    dS[:, 1, 2] = -D * b * x2 ** (D - 1)
    return S, dS


def _safe_solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched solve that returns NaN rows for singular systems."""
    out = np.full(b.shape, np.nan, dtype=complex)
    det = np.abs(np.linalg.det(A))
    scale = np.prod(np.linalg.norm(A, axis=2), axis=1)
    good = det > 1e-300 + 1e-15 * scale
    if np.any(good):
        out[good] = np.linalg.solve(A[good], b[good][:, :, None])[:, :, 0]
    return out
