"""Backtracking gradient ascent used by map and angle-spectrum refinement.

The objectives here are cheap to evaluate pointwise but have no analytic
gradient (they involve eigenvectors and projections of sample covariances),
so refinement uses finite-difference gradients and a conservative step
control: a step is accepted only if it increases the objective, otherwise
the step length is halved; after an accepted step it re-expands (capped at
``initial_step``) so progress along a curved ridge does not decay to a
crawl. The loop stops once the step length falls below ``min_step`` or
after ``max_iter`` iterations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class AscentResult:
    x: np.ndarray
    value: float
    iterations: int
    moved: float  # Euclidean distance from the starting point


def gradient_ascent(
    value_fn: Callable[[np.ndarray], float],
    grad_fn: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    initial_step: float,
    min_step: float,
    max_iter: int = 200,
    lower: np.ndarray | None = None,
    upper: np.ndarray | None = None,
) -> AscentResult:
    """Maximize value_fn starting from x0.

    The step length scales the *normalized* gradient direction, so
    ``initial_step`` is in the units of x (meters or radians here). Bounds,
    when given, are enforced by clipping the candidate point.
    """
    x = np.asarray(x0, dtype=float).copy()
    best = value_fn(x)
    if not np.isfinite(best):
        return AscentResult(x=x, value=best, iterations=0, moved=0.0)
    step = float(initial_step)
    it = 0
    while step >= min_step and it < max_iter:
        it += 1
        g = grad_fn(x)
        norm = float(np.linalg.norm(g))
        if not np.isfinite(norm) or norm == 0.0:
            break
        cand = x + step * g / norm
        if lower is not None:
            cand = np.maximum(cand, lower)
        if upper is not None:
            cand = np.minimum(cand, upper)
        val = value_fn(cand)
        if np.isfinite(val) and val > best:
            x, best = cand, val
            step = min(2.0 * step, float(initial_step))
        else:
            step *= 0.5
    moved = float(np.linalg.norm(x - np.asarray(x0, dtype=float)))
    return AscentResult(x=x, value=best, iterations=it, moved=moved)


def finite_difference_gradient(
    value_fn: Callable[[np.ndarray], float],
    x: np.ndarray,
    h: float,
) -> np.ndarray:
    """Central-difference gradient, falling back to one-sided differences
    when a probe point evaluates to -inf (out of the valid domain)."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    f0 = None
    for d in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[d] += h
        xm[d] -= h
        fp = value_fn(xp)
        fm = value_fn(xm)
        if np.isfinite(fp) and np.isfinite(fm):
            g[d] = (fp - fm) / (2.0 * h)
        elif np.isfinite(fp):
            if f0 is None:
                f0 = value_fn(x)
            g[d] = (fp - f0) / h
        elif np.isfinite(fm):
            if f0 is None:
                f0 = value_fn(x)
            g[d] = (f0 - fm) / h
        else:
            g[d] = 0.0
    return g
