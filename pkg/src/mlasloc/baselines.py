"""Reference fusion methods: summed MUSIC spectra and parametric soft fusion.

Both consume the same per-pair payloads as the likelihood fusion, so every
method in a comparison sees identical covariances and pre-estimates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import (
    FieldOfViewError,
    angles_for_target,
    grid_angles,
    ray_direction,
    ray_intersection,
)
from .likelihood import PerPairContext, shared_target_count
from .mapgrid import GridSpec, LikelihoodMap
from .subspace import NoiseSubspace, music_value, music_values, noise_subspace

MUSIC_COMBINATION = "music-combination"
SOFT_FUSION = "soft-fusion"

# Sentinel for a target no soft-fusion estimate was assigned to.
MISS_POSITION = (np.inf, np.inf)


@dataclass(frozen=True)
class BaselineResult:
    method: str
    positions: np.ndarray  # (K, 2); rows may be the infinite miss sentinel

    def __post_init__(self):
        if self.positions.ndim != 2 or self.positions.shape[1] != 2:
            raise ValueError("positions must be (K, 2)")


def _subspaces(contexts: Sequence[PerPairContext]) -> list[NoiseSubspace]:
    return [noise_subspace(ctx.covariance, ctx.num_references) for ctx in contexts]


def music_combination_map(
    contexts: Sequence[PerPairContext], grid: GridSpec, scale: str = "linear"
) -> LikelihoodMap:
    """Uniformly weighted sum of per-pair MUSIC spectra over the position grid.

    Each pair's pseudo-spectrum is evaluated at the departure/arrival angles
    the cell position implies for that pair. ``scale`` selects what is
    summed: "linear" adds the spectra as they are, "db" adds their decibel
    versions; which one the combination should use is not settled, so both
    are available and linear is the default.
    """
    if scale not in ("linear", "db"):
        raise ValueError(f"scale must be 'linear' or 'db', got {scale!r}")
    shared_target_count(contexts)
    subspaces = _subspaces(contexts)
    xs, ys = grid.xs(), grid.ys()
    shape = (xs.size, ys.size)
    mesh_x, mesh_y = np.meshgrid(xs, ys, indexing="ij")
    total = np.zeros(shape)
    sentinel = np.zeros(shape, dtype=bool)
    for ctx, sub in zip(contexts, subspaces):
        aod, aoa, in_view = grid_angles(ctx.geometry, mesh_x.ravel(), mesh_y.ravel())
        flat = np.full(aod.size, -np.inf)
        idx = np.nonzero(in_view)[0]
        if idx.size:
            j = music_values(ctx.geometry, sub, aod[idx], aoa[idx])
            flat[idx] = j if scale == "linear" else 10.0 * np.log10(j)
        local = flat.reshape(shape)
        sentinel |= ~np.isfinite(local)
        total += np.where(np.isfinite(local), local, 0.0)
    total[sentinel] = -np.inf
    return LikelihoodMap(grid=grid, values=total)


class MusicObjective:
    """Continuous MUSIC-combination objective for peak refinement."""

    def __init__(self, contexts: Sequence[PerPairContext], scale: str = "linear"):
        if scale not in ("linear", "db"):
            raise ValueError(f"scale must be 'linear' or 'db', got {scale!r}")
        shared_target_count(contexts)
        self.contexts = list(contexts)
        self.subspaces = _subspaces(self.contexts)
        self.scale = scale

    def value(self, x: float, y: float) -> float:
        total = 0.0
        point = np.array([x, y], dtype=float)
        for ctx, sub in zip(self.contexts, self.subspaces):
            try:
                ang = angles_for_target(ctx.geometry, point)
            except FieldOfViewError:
                return -np.inf
            j = music_value(ctx.geometry, sub, ang.aod, ang.aoa)
            total += j if self.scale == "linear" else 10.0 * np.log10(j)
        return total

    def local_objective(self, x0: float, y0: float):
        # No per-point combinatorial state: the spectrum sum is already smooth.
        def f(xy: np.ndarray) -> float:
            return self.value(float(xy[0]), float(xy[1]))

        return f


def soft_fusion_estimate(
    contexts: Sequence[PerPairContext], truth: np.ndarray
) -> BaselineResult:
    """Per-pair ray triangulation with perfect (truth-side) association.

    Every pre-estimated angle pair of every radar pair is converted to a
    position by intersecting the STx ray at the departure angle with the
    SRx ray at the arrival angle, then assigned to the nearest true target.
    A target's estimate is the mean of its assigned non-degenerate
    intersections; a target with only near-parallel (degenerate)
    intersections keeps the one with the widest crossing angle; a target
    with nothing assigned is scored as a miss via an infinite position.
    """
    truth = np.asarray(truth, dtype=float).reshape(-1, 2)
    shared_target_count(contexts)
    num_targets = truth.shape[0]
    assigned: list[list] = [[] for _ in range(num_targets)]
    for ctx in contexts:
        geom = ctx.geometry
        for ang in ctx.pre_estimates.angle_pairs:
            inter = ray_intersection(
                geom.stx.origin,
                ray_direction(geom.stx, ang.aod),
                geom.srx.origin,
                ray_direction(geom.srx, ang.aoa),
            )
            dists = np.linalg.norm(truth - inter.point, axis=1)
            assigned[int(np.argmin(dists))].append(inter)

    positions = np.empty((num_targets, 2))
    for t in range(num_targets):
        good = [e for e in assigned[t] if not e.degenerate]
        if good:
            positions[t] = np.mean([e.point for e in good], axis=0)
        elif assigned[t]:
            fallback = max(assigned[t], key=lambda e: e.crossing_angle_rad)
            positions[t] = fallback.point
        else:
            positions[t] = MISS_POSITION
    return BaselineResult(method=SOFT_FUSION, positions=positions)
