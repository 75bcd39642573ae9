"""Batched Nelder-Mead simplex minimization.

Many small, independent problems (one per bootstrap resample, one per
start point) are advanced in lock-step so every objective call is a single
vectorized evaluation over the whole batch. The per-row update follows the
classic reflect / expand / contract / shrink rules, with the same
convergence test as ``scipy.optimize.minimize(method="Nelder-Mead")``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["BatchMinimizeResult", "nelder_mead_batch"]

# fun(points (b, k), rows (b,)) -> values (b,); rows index the problem each point belongs to
BatchObjective = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass
class BatchMinimizeResult:
    x: np.ndarray
    fun: np.ndarray
    n_iter: np.ndarray
    converged: np.ndarray


def _initial_simplex(x0: np.ndarray, step: np.ndarray | float | None) -> np.ndarray:
    b, k = x0.shape
    sim = np.repeat(x0[:, None, :], k + 1, axis=1)
    if step is None:
        delta = np.where(x0 != 0.0, 0.05 * x0, 0.00025)
    else:
        delta = np.broadcast_to(np.asarray(step, dtype=float), (b, k))
    for j in range(k):
        sim[:, j + 1, j] += delta[:, j]
    return sim


def _evaluate(fun: BatchObjective, pts: np.ndarray, rows: np.ndarray) -> np.ndarray:
    with np.errstate(all="ignore"):
        vals = np.asarray(fun(pts, rows), dtype=float)
    return np.where(np.isnan(vals), np.inf, vals)


def nelder_mead_batch(
    fun: BatchObjective,
    x0: np.ndarray,
    *,
    initial_step: np.ndarray | float | None = None,
    xatol: float = 1e-6,
    fatol: float = 1e-8,
    max_iter: int = 2000,
) -> BatchMinimizeResult:
    """Minimize ``b`` independent ``k``-dimensional problems simultaneously.

    ``fun`` receives a ``(b', k)`` array of points plus the problem index of
    each point and must return ``b'`` objective values; ``inf`` marks
    infeasible points. Problems stop moving once their simplex satisfies
    both the ``xatol`` and ``fatol`` tests.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    b, k = x0.shape
    rows_all = np.arange(b)

    sim = _initial_simplex(x0, initial_step)
    fsim = _evaluate(fun, sim.reshape(-1, k), np.repeat(rows_all, k + 1)).reshape(b, k + 1)

    n_iter = np.zeros(b, dtype=int)
    converged = np.zeros(b, dtype=bool)

    for _ in range(max_iter):
        order = np.argsort(fsim, axis=1, kind="stable")
        sim = np.take_along_axis(sim, order[:, :, None], axis=1)
        fsim = np.take_along_axis(fsim, order, axis=1)

        with np.errstate(invalid="ignore"):
            xspread = np.max(np.abs(sim[:, 1:] - sim[:, :1]), axis=(1, 2))
            fspread = np.max(np.abs(fsim[:, 1:] - fsim[:, :1]), axis=1)
        converged |= (xspread <= xatol) & (fspread <= fatol)
        active = np.flatnonzero(~converged)
        if active.size == 0:
            break
        n_iter[active] += 1

        s = sim[active]
        fs = fsim[active]
        worst = s[:, -1]
        centroid = s[:, :-1].mean(axis=1)

        xr = centroid + (centroid - worst)
        fr = _evaluate(fun, xr, active)
        xe = centroid + 2.0 * (centroid - worst)
        fe = _evaluate(fun, xe, active)

        f_best = fs[:, 0]
        f_second = fs[:, -2]
        f_worst = fs[:, -1]

        expand = fr < f_best
        accept_r = (~expand) & (fr < f_second)
        outside = (~expand) & (~accept_r) & (fr < f_worst)
        inside = (~expand) & (~accept_r) & (~outside)

        xc = np.where(outside[:, None], centroid + 0.5 * (xr - centroid), centroid + 0.5 * (worst - centroid))
        need_c = outside | inside
        fc = np.full(active.size, np.inf)
        if need_c.any():
            fc[need_c] = _evaluate(fun, xc[need_c], active[need_c])

        new_x = worst.copy()
        new_f = f_worst.copy()

        use_e = expand & (fe < fr)
        use_r = (expand & ~use_e) | accept_r
        new_x[use_e], new_f[use_e] = xe[use_e], fe[use_e]
        new_x[use_r], new_f[use_r] = xr[use_r], fr[use_r]

        ok_out = outside & (fc <= fr)
        ok_in = inside & (fc < f_worst)
        ok_c = ok_out | ok_in
        new_x[ok_c], new_f[ok_c] = xc[ok_c], fc[ok_c]

        s[:, -1] = new_x
        fs[:, -1] = new_f

        shrink = need_c & ~ok_c
        if shrink.any():
            idx = np.flatnonzero(shrink)
            best = s[idx, :1]
            s[idx, 1:] = best + 0.5 * (s[idx, 1:] - best)
            pts = s[idx, 1:].reshape(-1, k)
            fs[idx, 1:] = _evaluate(fun, pts, np.repeat(active[idx], k)).reshape(idx.size, k)

        sim[active] = s
        fsim[active] = fs

    best = np.argmin(fsim, axis=1)
    return BatchMinimizeResult(
        x=sim[rows_all, best],
        fun=fsim[rows_all, best],
        n_iter=n_iter,
        converged=converged,
    )
