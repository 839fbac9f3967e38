"""Scene geometry: uniform linear arrays, signed angles, steering vectors.

All geometry lives in the x-y plane. Each radar pair couples a sensing
transmitter (STx) and a sensing receiver (SRx), both modeled as
half-wavelength-spaced uniform linear arrays facing the coverage area.
Angles are measured from the array boresight (the array normal) and are
positive toward the side obtained by rotating the boresight 90 degrees
clockwise; e.g. with boresight (0, 1) a target at (1, 1) sits at +45 deg.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HALF_PI = 0.5 * np.pi

# Rays closer than this to parallel cannot localize (monostatic-like geometry).
PARALLEL_TOL_RAD = np.deg2rad(0.5)


class FieldOfViewError(ValueError):
    """Position outside the open half-plane in front of an array."""


def _as_point(p) -> np.ndarray:
    p = np.asarray(p, dtype=float).reshape(2)
    return p


@dataclass(frozen=True)
class ArraySpec:
    """A uniform linear array: position, facing direction, element count."""

    origin: np.ndarray
    boresight: np.ndarray
    num_elements: int

    def __post_init__(self):
        object.__setattr__(self, "origin", _as_point(self.origin))
        object.__setattr__(self, "boresight", _as_point(self.boresight))
        if abs(np.linalg.norm(self.boresight) - 1.0) > 1e-12:
            raise ValueError("boresight must be a unit vector")
        if self.num_elements < 1:
            raise ValueError("num_elements must be >= 1")


@dataclass(frozen=True)
class RadarPairGeometry:
    """One STx/SRx radar pair with its index in the scene."""

    stx: ArraySpec
    srx: ArraySpec
    id: int = 0

    @property
    def num_tx(self) -> int:
        return self.stx.num_elements

    @property
    def num_rx(self) -> int:
        return self.srx.num_elements

    @property
    def channel_dim(self) -> int:
        return self.stx.num_elements * self.srx.num_elements


@dataclass(frozen=True)
class AnglePair:
    """Departure/arrival angles (radians) of one target at one radar pair."""

    aod: float
    aoa: float

    def __post_init__(self):
        if not (abs(self.aod) < HALF_PI and abs(self.aoa) < HALF_PI):
            raise ValueError("angles must lie in (-pi/2, pi/2)")


@dataclass(frozen=True)
class Scene:
    """Radar pairs plus ground-truth target positions.

    Every target must lie strictly in front of every array so that the
    sin-parametrized steering model is unambiguous.
    """

    pairs: tuple[RadarPairGeometry, ...]
    targets: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))
        object.__setattr__(
            self, "targets", np.asarray(self.targets, dtype=float).reshape(-1, 2)
        )
        if len(self.pairs) < 1:
            raise ValueError("scene needs at least one radar pair")
        if self.targets.shape[0] < 1:
            raise ValueError("scene needs at least one target")
        ids = [p.id for p in self.pairs]
        if len(set(ids)) != len(ids):
            raise ValueError("radar pair ids must be unique")
        for pair in self.pairs:
            for t in self.targets:
                try:
                    angles_for_target(pair, t)
                except ValueError as exc:
                    raise ValueError(
                        f"target {t.tolist()} invalid for pair {pair.id}: {exc}"
                    ) from exc

    @property
    def num_targets(self) -> int:
        return self.targets.shape[0]

    @property
    def num_pairs(self) -> int:
        return len(self.pairs)


def clockwise_normal(v: np.ndarray) -> np.ndarray:
    """Unit vector 90 degrees clockwise from v (the positive-angle side)."""
    return np.array([v[1], -v[0]])


def signed_angle(array: ArraySpec, point) -> float:
    """Signed boresight-relative angle of `point` as seen from `array`."""
    d = _as_point(point) - array.origin
    r = float(np.hypot(d[0], d[1]))
    if r < 1e-12:
        raise ValueError("point coincides with the array origin")
    along = float(d @ array.boresight)
    if along <= 0.0:
        raise FieldOfViewError("point is outside the array field of view")
    across = float(d @ clockwise_normal(array.boresight))
    return float(np.arctan2(across, along))


def angles_for_target(pair: RadarPairGeometry, target) -> AnglePair:
    """Departure angle at the STx and arrival angle at the SRx for a target."""
    return AnglePair(
        aod=signed_angle(pair.stx, target),
        aoa=signed_angle(pair.srx, target),
    )


def ray_direction(array: ArraySpec, angle: float) -> np.ndarray:
    """Unit direction leaving `array` at the given boresight-relative angle."""
    return np.cos(angle) * array.boresight + np.sin(angle) * clockwise_normal(
        array.boresight
    )


def steering_vector(angle: float, n: int) -> np.ndarray:
    """ULA response at half-wavelength spacing: element m is exp(j*pi*m*sin)."""
    if not abs(angle) < HALF_PI:
        raise ValueError("angle must lie in (-pi/2, pi/2)")
    if n < 1:
        raise ValueError("element count must be >= 1")
    return np.exp(1j * np.pi * np.arange(n) * np.sin(angle))


def joint_steering(pair: RadarPairGeometry, aod: float, aoa: float) -> np.ndarray:
    """Kronecker product of the AoD (length M) and AoA (length N) responses.

    Spelled as an outer product; np.kron carries too much overhead for a
    function this hot.
    """
    vt = steering_vector(aod, pair.num_tx)
    vr = steering_vector(aoa, pair.num_rx)
    return (vt[:, None] * vr[None, :]).ravel()


def steering_matrix(pair: RadarPairGeometry, angle_pairs) -> np.ndarray:
    """Stack joint steering vectors of several targets into an (M*N, K) matrix."""
    pairs = list(angle_pairs)
    if len(pairs) < 1:
        raise ValueError("need at least one angle pair")
    return np.column_stack([joint_steering(pair, ap.aod, ap.aoa) for ap in pairs])


def steering_grid(pair: RadarPairGeometry, aods, aoas) -> np.ndarray:
    """Joint steering vectors for paired angle arrays, as an (M*N, C) matrix.

    Vectorized companion of :func:`joint_steering`; column c corresponds to
    (aods[c], aoas[c]).
    """
    aods = np.asarray(aods, dtype=float).ravel()
    aoas = np.asarray(aoas, dtype=float).ravel()
    m = np.arange(pair.num_tx)[:, None]
    n = np.arange(pair.num_rx)[:, None]
    vt = np.exp(1j * np.pi * m * np.sin(aods)[None, :])
    vr = np.exp(1j * np.pi * n * np.sin(aoas)[None, :])
    return (vt[:, None, :] * vr[None, :, :]).reshape(pair.channel_dim, aods.size)


def grid_angles(pair: RadarPairGeometry, xs, ys):
    """Per-cell (aod, aoa, in_view) for flattened position arrays.

    Out-of-view cells get angle 0 and in_view False; callers must mask.
    """
    xs = np.asarray(xs, dtype=float).ravel()
    ys = np.asarray(ys, dtype=float).ravel()
    out_aod = np.zeros_like(xs)
    out_aoa = np.zeros_like(xs)
    in_view = np.ones(xs.shape, dtype=bool)
    for arr, out in ((pair.stx, out_aod), (pair.srx, out_aoa)):
        dx = xs - arr.origin[0]
        dy = ys - arr.origin[1]
        cw = clockwise_normal(arr.boresight)
        along = dx * arr.boresight[0] + dy * arr.boresight[1]
        across = dx * cw[0] + dy * cw[1]
        ok = along > 0.0
        in_view &= ok
        np.divide(across, along, out=across, where=ok)
        out[ok] = np.arctan(across[ok])
    return out_aod, out_aoa, in_view


@dataclass(frozen=True)
class RayIntersection:
    """Least-squares meeting point of two rays, with a parallelism flag."""

    point: np.ndarray
    degenerate: bool
    crossing_angle_rad: float


def ray_intersection(
    stx_origin, aod_direction, srx_origin, aoa_direction
) -> RayIntersection:
    """Closest point to two rays in the least-squares sense.

    Exact when the rays cross. Rays within ``PARALLEL_TOL_RAD`` of parallel
    are flagged degenerate; the returned point is then the minimum-norm
    least-squares solution and should not be trusted for localization.
    """
    o1 = _as_point(stx_origin)
    o2 = _as_point(srx_origin)
    d1 = _as_point(aod_direction)
    d2 = _as_point(aoa_direction)
    n1 = np.linalg.norm(d1)
    n2 = np.linalg.norm(d2)
    if n1 < 1e-12 or n2 < 1e-12:
        raise ValueError("ray directions must be nonzero")
    d1 = d1 / n1
    d2 = d2 / n2

    cross = abs(d1[0] * d2[1] - d1[1] * d2[0])
    dot = abs(float(d1 @ d2))
    crossing = float(np.arctan2(cross, dot))
    degenerate = crossing < PARALLEL_TOL_RAD

    # Minimize sum of squared distances to both lines:
    # (P1 + P2) x = P1 o1 + P2 o2 with P_i = I - d_i d_i^T.
    p1 = np.eye(2) - np.outer(d1, d1)
    p2 = np.eye(2) - np.outer(d2, d2)
    lhs = p1 + p2
    rhs = p1 @ o1 + p2 @ o2
    if degenerate:
        point = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
    else:
        point = np.linalg.solve(lhs, rhs)
    return RayIntersection(point=point, degenerate=degenerate, crossing_angle_rad=crossing)


def target_rays(pair: RadarPairGeometry, angles: AnglePair):
    """The STx and SRx rays implied by an angle pair: ((o1, d1), (o2, d2))."""
    return (
        (pair.stx.origin, ray_direction(pair.stx, angles.aod)),
        (pair.srx.origin, ray_direction(pair.srx, angles.aoa)),
    )
