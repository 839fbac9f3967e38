"""Trace-form log-likelihood fusion on an x-y map.

For radar pair p with sample covariance R, noise variance sigma2 and Q
subcarriers, the concentrated log-likelihood of an angle tuple Psi is

    L_p(Psi) = (Q / (2 sigma2)) * Tr{ A(Psi) A(Psi)^+ R },

with A the joint steering matrix. The per-target decoupled map replaces one
entry of the pair's pre-estimated angle tuple with the angles implied by a
candidate position; each pair contributes the best replacement index
(its "local" map), and pair maps are summed into the combined map.

The map over a full grid is evaluated through a projector split: with F the
fixed steering columns and a the candidate column,

    Tr{P_[F,a] R} = Tr{P_F R} + b^H R b / ||b||^2,   b = (I - P_F) a,

so each (pair, replaced-target) combination needs one small cached
decomposition of F and only vector work per grid cell.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ascent import finite_difference_gradient
from .geometry import (
    AnglePair,
    ArraySpec,
    FieldOfViewError,
    RadarPairGeometry,
    angles_for_target,
    grid_angles,
    joint_steering,
    steering_grid,
)
from .mapgrid import GridSpec, LikelihoodMap
from .subspace import PreEstimate

# Candidate angles closer than this to a fixed pre-estimate (in both
# coordinates) drop the colliding fixed column; keeps the map finite and
# continuous through the pre-estimate itself.
COLLISION_EPS_RAD = np.deg2rad(0.2)

# Relative smallest-singular-value threshold below which a steering matrix
# counts as rank-deficient.
RANK_RTOL = 1e-8

# Residual-norm fraction below which a candidate column is treated as lying
# inside the span of the fixed columns (projector unchanged).
DEN_TOL_FRAC = 1e-9

# Finite-difference step for map gradients, meters.
FD_STEP_M = 1e-4


class RankDeficiencyError(ValueError):
    """Steering matrix has (numerically) dependent columns."""


@dataclass(frozen=True)
class PerPairContext:
    """Everything the fusion stage may use from one radar pair.

    This is the complete per-pair payload: geometry, the sample covariance,
    the noise variance, the subcarrier count and the pre-estimated angles.
    Raw channel estimates stay at the pair.
    """

    geometry: RadarPairGeometry
    covariance: np.ndarray
    noise_variance: float
    num_subcarriers: int
    pre_estimates: PreEstimate

    def __post_init__(self):
        n = self.geometry.channel_dim
        if self.covariance.shape != (n, n):
            raise ValueError(
                f"covariance shape {self.covariance.shape} does not match channel dim {n}"
            )
        scale = max(float(np.abs(self.covariance).max()), 1e-300)
        if np.abs(self.covariance - self.covariance.conj().T).max() > 1e-9 * scale:
            raise ValueError("covariance must be Hermitian")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be >= 0")
        if self.num_subcarriers < 1:
            raise ValueError("num_subcarriers must be >= 1")
        if len(self.pre_estimates.angle_pairs) < 1:
            raise ValueError("need at least one pre-estimated angle pair")

    @property
    def num_references(self) -> int:
        return len(self.pre_estimates.angle_pairs)

    @property
    def weight(self) -> float:
        """Q / (2 sigma2); noiseless contexts fall back to Q / 2.

        With sigma2 = 0 the likelihood weight is unbounded; Q / 2 keeps the
        map finite and, being common practice only in synthetic noiseless
        runs where every pair shares sigma2 = 0, leaves every argmax
        unchanged.
        """
        if self.noise_variance > 0:
            return self.num_subcarriers / (2.0 * self.noise_variance)
        return self.num_subcarriers / 2.0

    def to_dict(self) -> dict:
        return {
            "geometry": _pair_to_dict(self.geometry),
            "covariance_re": self.covariance.real.tolist(),
            "covariance_im": self.covariance.imag.tolist(),
            "noise_variance": float(self.noise_variance),
            "num_subcarriers": int(self.num_subcarriers),
            "pre_estimates": {
                "angles": [[a.aod, a.aoa] for a in self.pre_estimates.angle_pairs],
                "values": [float(v) for v in self.pre_estimates.spectrum_values],
                "low_quality": bool(self.pre_estimates.low_quality),
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PerPairContext":
        pre = data["pre_estimates"]
        return cls(
            geometry=_pair_from_dict(data["geometry"]),
            covariance=np.asarray(data["covariance_re"], dtype=float)
            + 1j * np.asarray(data["covariance_im"], dtype=float),
            noise_variance=float(data["noise_variance"]),
            num_subcarriers=int(data["num_subcarriers"]),
            pre_estimates=PreEstimate(
                angle_pairs=tuple(AnglePair(aod=a, aoa=b) for a, b in pre["angles"]),
                spectrum_values=tuple(float(v) for v in pre.get("values", ())),
                low_quality=bool(pre.get("low_quality", False)),
            ),
        )


def _array_to_dict(spec: ArraySpec) -> dict:
    return {
        "origin": [float(spec.origin[0]), float(spec.origin[1])],
        "boresight": [float(spec.boresight[0]), float(spec.boresight[1])],
        "num_elements": int(spec.num_elements),
    }


def _array_from_dict(data: dict) -> ArraySpec:
    return ArraySpec(
        origin=np.asarray(data["origin"], dtype=float),
        boresight=np.asarray(data["boresight"], dtype=float),
        num_elements=int(data["num_elements"]),
    )


def _pair_to_dict(pair: RadarPairGeometry) -> dict:
    return {
        "stx": _array_to_dict(pair.stx),
        "srx": _array_to_dict(pair.srx),
        "id": int(pair.id),
    }


def _pair_from_dict(data: dict) -> RadarPairGeometry:
    return RadarPairGeometry(
        stx=_array_from_dict(data["stx"]),
        srx=_array_from_dict(data["srx"]),
        id=int(data["id"]),
    )


def projection_trace(A: np.ndarray, R: np.ndarray, rank_rtol: float = RANK_RTOL) -> float:
    """Tr{A A^+ R} = Tr{P R}, P the orthogonal projector onto col(A).

    Uses the SVD basis rather than the normal equations, so no explicit
    inverse ever appears. Raises RankDeficiencyError when the smallest
    singular value of A falls below rank_rtol times the largest; callers
    implement their own column-dropping policy.
    """
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    if s[0] == 0.0 or s[-1] < rank_rtol * s[0]:
        raise RankDeficiencyError(
            f"steering matrix rank-deficient: singular values {s}"
        )
    t = complex(np.trace(U.conj().T @ R @ U))
    if abs(t.imag) > 1e-8 * abs(t.real) + 1e-12:
        raise ValueError(f"projection trace has non-negligible imaginary part: {t}")
    return float(t.real)


def _collides(candidate: AnglePair, fixed: AnglePair, eps_rad: float = COLLISION_EPS_RAD) -> bool:
    return (
        abs(candidate.aod - fixed.aod) < eps_rad
        and abs(candidate.aoa - fixed.aoa) < eps_rad
    )


def candidate_trace(ctx: PerPairContext, k: int, candidate: AnglePair) -> float:
    """Tr{A A^+ R} with pre-estimate entry k replaced by the candidate angles.

    Applies the collision rule first (fixed pre-estimates within 0.2 deg of
    the candidate in both coordinates are dropped). If the resulting matrix
    is still rank-deficient, fixed columns are removed one at a time, each
    time the one most aligned with the null direction, until full rank; the
    candidate column always survives.
    """
    refs = ctx.pre_estimates.angle_pairs
    if not 0 <= k < len(refs):
        raise IndexError(f"target index {k} out of range for {len(refs)} pre-estimates")
    fixed = [refs[j] for j in range(len(refs)) if j != k]
    fixed = [f for f in fixed if not _collides(candidate, f)]
    geom = ctx.geometry
    cand_col = joint_steering(geom, candidate.aod, candidate.aoa)
    while True:
        cols = [joint_steering(geom, f.aod, f.aoa) for f in fixed]
        A = np.column_stack(cols + [cand_col])
        try:
            return projection_trace(A, ctx.covariance)
        except RankDeficiencyError:
            if not fixed:
                raise
            _, _, vh = np.linalg.svd(A, full_matrices=False)
            null_dir = np.abs(vh[-1, : len(fixed)])
            fixed.pop(int(np.argmax(null_dir)))


def per_target_likelihood(ctx: PerPairContext, k: int, x: float, y: float) -> float:
    """Weighted decoupled likelihood of position (x, y) replacing target k.

    Out-of-view positions return -inf (excluded from the map).
    """
    try:
        angles = angles_for_target(ctx.geometry, np.array([x, y], dtype=float))
    except FieldOfViewError:
        return -np.inf
    return ctx.weight * candidate_trace(ctx, k, angles)


def local_map_value(ctx: PerPairContext, x: float, y: float) -> float:
    """Best per-target likelihood of one pair at (x, y)."""
    return max(
        per_target_likelihood(ctx, k, x, y) for k in range(ctx.num_references)
    )


def active_index(ctx: PerPairContext, x: float, y: float) -> int:
    """Replacement index attaining the local map value (lowest on ties)."""
    vals = [per_target_likelihood(ctx, k, x, y) for k in range(ctx.num_references)]
    return int(np.argmax(vals))


def shared_target_count(contexts: Sequence[PerPairContext]) -> int:
    """Common number of pre-estimates across contexts (they must agree)."""
    ks = {ctx.num_references for ctx in contexts}
    if len(ks) != 1:
        raise ValueError(f"contexts disagree on the number of targets: {sorted(ks)}")
    return ks.pop()


def _pair_local_grid(
    ctx: PerPairContext, aod: np.ndarray, aoa: np.ndarray, in_view: np.ndarray
) -> np.ndarray:
    """Unweighted local map of one pair over flattened grid angles.

    aod/aoa/in_view are flat arrays of equal length; out-of-view entries get
    -inf. Cells colliding with a pre-estimate are recomputed pointwise under
    the collision rule.
    """
    n_cells = aod.size
    out = np.full(n_cells, -np.inf)
    idx = np.nonzero(in_view)[0]
    if idx.size == 0:
        return out
    geom = ctx.geometry
    R = ctx.covariance
    n = geom.channel_dim
    A_grid = steering_grid(geom, aod[idx], aoa[idx])  # (n, C)
    RA = R @ A_grid
    s1 = np.real(np.einsum("ic,ic->c", A_grid.conj(), RA))

    refs = ctx.pre_estimates.angle_pairs
    K = len(refs)
    ref_cols = np.column_stack(
        [joint_steering(geom, r.aod, r.aoa) for r in refs]
    )
    best = np.full(idx.size, -np.inf)
    for k in range(K):
        fixed_idx = [j for j in range(K) if j != k]
        F = ref_cols[:, fixed_idx]
        if F.shape[1]:
            U, sv, _ = np.linalg.svd(F, full_matrices=False)
            r = int(np.sum(sv > RANK_RTOL * sv[0])) if sv[0] > 0 else 0
            QF = U[:, :r]
        else:
            QF = np.zeros((n, 0), dtype=complex)
        MF = QF.conj().T @ R @ QF
        tr_pf = float(np.real(np.trace(MF))) if QF.shape[1] else 0.0
        W = QF.conj().T @ A_grid  # (r, C)
        if QF.shape[1]:
            U_ = (R @ QF).conj().T @ A_grid
            cross = np.real(np.einsum("ic,ic->c", W.conj(), U_))
            quad = np.real(np.einsum("ic,ic->c", W.conj(), MF @ W))
            num = s1 - 2.0 * cross + quad
            den = n - np.sum(np.abs(W) ** 2, axis=0)
        else:
            num = s1
            den = np.full(idx.size, float(n))
        vals = np.where(den > DEN_TOL_FRAC * n, tr_pf + num / np.maximum(den, 1e-300), tr_pf)

        # Cells whose angles collide with a fixed pre-estimate use a reduced
        # fixed set; redo those the slow way.
        collide = np.zeros(idx.size, dtype=bool)
        for j in fixed_idx:
            f = refs[j]
            collide |= (np.abs(aod[idx] - f.aod) < COLLISION_EPS_RAD) & (
                np.abs(aoa[idx] - f.aoa) < COLLISION_EPS_RAD
            )
        for c in np.nonzero(collide)[0]:
            cand = AnglePair(aod=float(aod[idx[c]]), aoa=float(aoa[idx[c]]))
            vals[c] = candidate_trace(ctx, k, cand)
        best = np.maximum(best, vals)
    out[idx] = best
    return out


def combined_map(contexts: Sequence[PerPairContext], grid: GridSpec) -> LikelihoodMap:
    """Sum of weighted per-pair local maps over the grid.

    Cells outside any pair's field of view carry -inf and are skipped by
    peak search downstream.
    """
    shared_target_count(contexts)
    xs, ys = grid.xs(), grid.ys()
    shape = (xs.size, ys.size)
    mesh_x, mesh_y = np.meshgrid(xs, ys, indexing="ij")
    total = np.zeros(shape)
    sentinel = np.zeros(shape, dtype=bool)
    for ctx in contexts:
        aod, aoa, in_view = grid_angles(ctx.geometry, mesh_x.ravel(), mesh_y.ravel())
        local = _pair_local_grid(ctx, aod, aoa, in_view).reshape(shape)
        sentinel |= ~np.isfinite(local)
        total += np.where(np.isfinite(local), ctx.weight * local, 0.0)
    total[sentinel] = -np.inf
    return LikelihoodMap(grid=grid, values=total)


def combined_point_value(contexts: Sequence[PerPairContext], x: float, y: float) -> float:
    """Combined map value at a single position (alternating at the point)."""
    shared_target_count(contexts)
    return float(sum(local_map_value(ctx, x, y) for ctx in contexts))


def active_indices(contexts: Sequence[PerPairContext], x: float, y: float) -> tuple[int, ...]:
    return tuple(active_index(ctx, x, y) for ctx in contexts)


def frozen_point_value(
    contexts: Sequence[PerPairContext], x: float, y: float, active: Sequence[int]
) -> float:
    """Combined value with each pair's replacement index held fixed."""
    total = 0.0
    for ctx, k in zip(contexts, active):
        v = per_target_likelihood(ctx, int(k), x, y)
        if not np.isfinite(v):
            return -np.inf
        total += v
    return total


def combined_value_and_gradient(
    contexts: Sequence[PerPairContext],
    x: float,
    y: float,
    active: Sequence[int] | None = None,
    h: float = FD_STEP_M,
) -> tuple[float, np.ndarray]:
    """Combined value and central finite-difference gradient at (x, y).

    Each pair's active replacement index is frozen (at the argmax for the
    given point unless supplied), so the differenced function is smooth.
    Probes falling out of view degrade to one-sided differences.
    """
    if active is None:
        active = active_indices(contexts, x, y)

    def f(xy: np.ndarray) -> float:
        return frozen_point_value(contexts, float(xy[0]), float(xy[1]), active)

    p = np.array([x, y], dtype=float)
    return f(p), finite_difference_gradient(f, p, h)


class _FrozenBranch:
    """Cached projector split for one (pair, replaced-target) combination.

    Point-wise companion of :func:`_pair_local_grid`, using the same
    arithmetic: the fixed-column basis, its compressed covariance and
    Tr{P_F R} are computed once, each candidate then costs a few small
    mat-vecs. Candidates colliding with a fixed pre-estimate fall back to
    the pointwise collision rule.
    """

    def __init__(self, ctx: PerPairContext, k: int):
        self.ctx = ctx
        self.k = k
        refs = ctx.pre_estimates.angle_pairs
        self.fixed = [refs[j] for j in range(len(refs)) if j != k]
        geom = ctx.geometry
        self.n = geom.channel_dim
        R = ctx.covariance
        if self.fixed:
            F = np.column_stack(
                [joint_steering(geom, f.aod, f.aoa) for f in self.fixed]
            )
            U, sv, _ = np.linalg.svd(F, full_matrices=False)
            r = int(np.sum(sv > RANK_RTOL * sv[0])) if sv[0] > 0 else 0
            QF = U[:, :r]
        else:
            QF = np.zeros((self.n, 0), dtype=complex)
        self.QFh = QF.conj().T
        self.MF = self.QFh @ R @ QF
        self.tr_pf = float(np.real(np.trace(self.MF))) if QF.shape[1] else 0.0
        self.R = R

    def trace(self, candidate: AnglePair) -> float:
        for f in self.fixed:
            if _collides(candidate, f):
                return candidate_trace(self.ctx, self.k, candidate)
        a = joint_steering(self.ctx.geometry, candidate.aod, candidate.aoa)
        Ra = self.R @ a
        s1 = float(np.real(np.vdot(a, Ra)))
        if self.QFh.shape[0]:
            t = self.QFh @ a
            u = self.QFh @ Ra
            num = s1 - 2.0 * float(np.real(np.vdot(t, u))) + float(
                np.real(np.vdot(t, self.MF @ t))
            )
            den = self.n - float(np.sum(np.abs(t) ** 2))
        else:
            num = s1
            den = float(self.n)
        if den > DEN_TOL_FRAC * self.n:
            return self.tr_pf + num / max(den, 1e-300)
        return self.tr_pf


class CombinedObjective:
    """Map objective handed to peak refinement.

    ``value`` re-solves the per-pair alternation at every point;
    ``local_objective`` freezes the active indices at the seed so ascent
    climbs a smooth surface. Both run on cached per-(pair, target) branch
    evaluators, which also keeps point values numerically consistent with
    the vectorized grid path.
    """

    def __init__(self, contexts: Sequence[PerPairContext]):
        self.contexts = list(contexts)
        shared_target_count(self.contexts)
        self._branches: dict[tuple[int, int], _FrozenBranch] = {}

    def _branch(self, p: int, k: int) -> _FrozenBranch:
        key = (p, int(k))
        br = self._branches.get(key)
        if br is None:
            br = _FrozenBranch(self.contexts[p], int(k))
            self._branches[key] = br
        return br

    def _pair_branch_values(self, p: int, x: float, y: float) -> list[float] | None:
        """Weighted per-k values of one pair, or None when out of view."""
        ctx = self.contexts[p]
        try:
            ang = angles_for_target(ctx.geometry, np.array([x, y], dtype=float))
        except FieldOfViewError:
            return None
        return [
            ctx.weight * self._branch(p, k).trace(ang)
            for k in range(ctx.num_references)
        ]

    def value(self, x: float, y: float) -> float:
        total = 0.0
        for p in range(len(self.contexts)):
            vals = self._pair_branch_values(p, float(x), float(y))
            if vals is None:
                return -np.inf
            total += max(vals)
        return float(total)

    def local_objective(self, x0: float, y0: float):
        active = []
        for p in range(len(self.contexts)):
            vals = self._pair_branch_values(p, float(x0), float(y0))
            active.append(0 if vals is None else int(np.argmax(vals)))
        chosen = [
            (ctx, self._branch(p, k))
            for p, (ctx, k) in enumerate(zip(self.contexts, active))
        ]

        def f(xy: np.ndarray) -> float:
            total = 0.0
            for ctx, br in chosen:
                try:
                    ang = angles_for_target(
                        ctx.geometry, np.array([float(xy[0]), float(xy[1])])
                    )
                except FieldOfViewError:
                    return -np.inf
                total += ctx.weight * br.trace(ang)
            return total

        return f
