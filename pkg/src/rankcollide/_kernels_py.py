"""Pure numpy path kernel, vectorised across a batch of paths.

Mirrors ``_kernels.pyx`` operation for operation so both backends return
bit-identical results: same ranking rule, same update expression
``x + (drift[k] + vol[k] * z)``, and sequential left-to-right sums.
"""
from __future__ import annotations

import numpy as np


def run_batch(x0, drift, vol, z, win_lo, win_hi, eps, buffer_start, track_top):
    """Advance a batch of paths and collect per-path statistics.

    Parameters
    ----------
    x0 : (N,) float64
        Initial positions by name.
    drift, vol : (N,) float64
        Per-step increments by rank: ``g_k * dt`` and ``sqrt(sigma2_k * dt)``.
    z : (P, S, N) float64
        Standard normal draws, one per path, step and name.
    win_lo, win_hi : (W,) int64
        0-based lowest and highest rank of each tracked window.
    eps : (E,) float64
        Proximity thresholds.
    buffer_start : int
        Names ``>= buffer_start`` (0-based) are truncation buffer particles.
    track_top : int
        Highest tracked rank (0-based) for the boundary-contact test.

    Returns
    -------
    min_spread : (P, W), counts : (P, W, E) int64, com_end : (P,),
    min_gap : (P,), contact : (P,) bool, bad_step : (P,) int64 (-1 if finite)
    """
    P, S, N = z.shape
    W, E = len(win_lo), len(eps)
    x = np.broadcast_to(np.asarray(x0, dtype=np.float64), (P, N)).copy()
    min_spread = np.full((P, W), np.inf)
    counts = np.zeros((P, W, E), dtype=np.int64)
    min_gap = np.full(P, np.inf)
    contact = np.zeros(P, dtype=bool)
    bad_step = np.full(P, -1, dtype=np.int64)
    rows = np.arange(P)[:, None]
    ranks_of = np.empty((P, N), dtype=np.intp)
    rank_range = np.broadcast_to(np.arange(N), (P, N))

    order = np.argsort(x, axis=1, kind="stable")
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(S):
            ranks_of[rows, order] = rank_range
            x = x + (drift[ranks_of] + vol[ranks_of] * z[:, step, :])
            finite = np.isfinite(x).all(axis=1)
            newly_bad = ~finite & (bad_step < 0)
            bad_step[newly_bad] = step + 1
            if not finite.all():
                x[~finite] = 0.0
            order = np.argsort(x, axis=1, kind="stable")
            y = x[rows, order]
            if N > 1:
                g = (y[:, 1:] - y[:, :-1]).min(axis=1)
                np.minimum(min_gap, g, out=min_gap)
            if W:
                spread = y[:, win_hi] - y[:, win_lo]
                np.minimum(min_spread, spread, out=min_spread)
                counts += spread[:, :, None] < eps[None, None, :]
            if buffer_start < N:
                contact |= (order[:, :track_top + 1] >= buffer_start).any(axis=1)

    total_end = np.zeros(P)
    total_start = 0.0
    for j in range(N):
        total_end += x[:, j]
        total_start += float(x0[j])
    return min_spread, counts, total_end - total_start, min_gap, contact, bad_step
