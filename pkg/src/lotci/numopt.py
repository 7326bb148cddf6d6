"""Nelder-Mead maximization with optional box clipping, and a multistart wrapper."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .design import Region


class OptimizationError(RuntimeError):
    pass


@dataclass
class OptResult:
    x: np.ndarray
    value: float
    evaluations: int
    converged: bool
    start_index: int = 0


def nelder_mead(
    objective: Callable[[np.ndarray], float],
    start,
    scale=None,
    budget: int | None = None,
    tol: float = 1e-8,
    lower=None,
    upper=None,
) -> OptResult:
    """Maximize ``objective`` from ``start``.

    Iterates are clipped into ``[lower, upper]`` when bounds are given.
    Non-finite values met during the search count as -inf.
    """
    x0 = np.atleast_1d(np.asarray(start, dtype=float)).copy()
    d = x0.size
    budget = 500 * d if budget is None else int(budget)
    if budget < d + 1:
        raise OptimizationError(f"budget {budget} below dim + 1")
    scale = np.full(d, 0.1) if scale is None else np.broadcast_to(np.asarray(scale, dtype=float), (d,))
    if np.any(scale <= 0):
        raise OptimizationError("scale must be strictly positive")
    lo = None if lower is None else np.broadcast_to(np.asarray(lower, dtype=float), (d,))
    hi = None if upper is None else np.broadcast_to(np.asarray(upper, dtype=float), (d,))

    def clip(x):
        if lo is not None:
            x = np.maximum(x, lo)
        if hi is not None:
            x = np.minimum(x, hi)
        return x

    nfev = 0

    def f(x):
        nonlocal nfev
        nfev += 1
        v = float(objective(x))
        return v if np.isfinite(v) else -np.inf

    x0 = clip(x0)
    f0 = float(objective(x0))
    nfev += 1
    if not np.isfinite(f0):
        raise OptimizationError("objective is not finite at the start point")

    sim = [x0]
    vals = [f0]
    for j in range(d):
        x = x0.copy()
        x[j] += scale[j]
        x = clip(x)
        if np.array_equal(x, x0):
            x[j] -= scale[j]
            x = clip(x)
        sim.append(x)
        vals.append(f(x))
    sim = np.array(sim)
    vals = np.array(vals)

    converged = False
    while nfev < budget:
        order = np.argsort(-vals, kind="stable")
        sim, vals = sim[order], vals[order]
        diam = np.max(np.abs(sim[1:] - sim[0]))
        spread = vals[0] - vals[-1] if np.isfinite(vals[-1]) else np.inf
        if diam < tol or spread < tol:
            converged = True
            break
        centroid = sim[:-1].mean(axis=0)
        xr = clip(centroid + (centroid - sim[-1]))
        fr = f(xr)
        if fr > vals[0]:
            xe = clip(centroid + 2.0 * (centroid - sim[-1]))
            fe = f(xe)
            sim[-1], vals[-1] = (xe, fe) if fe > fr else (xr, fr)
            continue
        if fr > vals[-2]:
            sim[-1], vals[-1] = xr, fr
            continue
        if fr > vals[-1]:
            xc = clip(centroid + 0.5 * (xr - centroid))
        else:
            xc = clip(centroid + 0.5 * (sim[-1] - centroid))
        fc = f(xc)
        if fc > max(vals[-1], fr if fr > vals[-1] else -np.inf):
            sim[-1], vals[-1] = xc, fc
            continue
        for i in range(1, d + 1):
            sim[i] = clip(sim[0] + 0.5 * (sim[i] - sim[0]))
            vals[i] = f(sim[i])

    best = int(np.argmax(vals))
    return OptResult(sim[best].copy(), float(vals[best]), nfev, converged)


def multistart_max(
    objective: Callable[[np.ndarray], float],
    starts: Sequence,
    region: Region | None = None,
    budget_per_start: int | None = None,
    tol: float = 1e-8,
    scale=None,
) -> OptResult:
    """Best of independent Nelder-Mead runs, one per start, clipped to the region box.

    Ties go to the lowest start index. The result never falls below the best start value.
    """
    starts = [np.atleast_1d(np.asarray(s, dtype=float)) for s in starts]
    if not starts:
        raise OptimizationError("no start points")
    lo = hi = None
    if region is not None:
        lo, hi = region.lower, region.upper
        if scale is None:
            width = hi - lo
            scale = np.where(width > 0, 0.25 * width, 1e-3)
    best = None
    total = 0
    for i, s in enumerate(starts):
        r = nelder_mead(objective, s, scale, budget_per_start, tol, lo, hi)
        total += r.evaluations
        sv = float(objective(s))
        total += 1
        if np.isfinite(sv) and sv > r.value:
            r = OptResult(s.copy(), sv, r.evaluations, r.converged)
        r.start_index = i
        if best is None or r.value > best.value:
            best = r
    best.evaluations = total
    return best
