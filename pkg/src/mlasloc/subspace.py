"""MUSIC angle pre-estimation from per-pair sample covariances.

The two-dimensional MUSIC pseudo-spectrum for a radar pair is

    J(aod, aoa) = 1 / (a^H G G^H a),

where ``a`` is the joint transmit/receive steering vector and ``G`` spans the
noise subspace of the sample covariance (the eigenvectors belonging to the
``M*N - K`` smallest eigenvalues). Pre-estimation evaluates J on a uniform
angle grid, polishes its strict local maxima with gradient ascent on log J,
and keeps the K strongest distinct poles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ascent import finite_difference_gradient, gradient_ascent
from .geometry import AnglePair, RadarPairGeometry, joint_steering, steering_grid
from .mapgrid import local_maxima_2d
from .textio import fmt

# Reciprocal cap applied where the steering vector (numerically) falls inside
# the signal subspace and the denominator underflows.
SPECTRUM_CAP = 1e12
_DEN_FLOOR = 1.0 / SPECTRUM_CAP

# Refinement of grid peaks runs on log J; steps are angles in radians.
_REFINE_MIN_STEP_RAD = 1e-5
_REFINE_MAX_ITER = 100
_FD_STEP_RAD = 1e-6
_ANGLE_BOUND_RAD = np.pi / 2 - 1e-9
# The backtracking ascent can exhaust its iteration budget while crawling
# along the narrow curved ridge around a spectrum pole; restarting it (which
# resets the step size) lets it converge the rest of the way.
_REFINE_PASSES = 3
# Two refined peaks closer than this in both coordinates are the same pole.
_DEDUP_EPS_RAD = np.deg2rad(0.2)
# Budget for refining plain grid cells when the strict maxima do not yield
# enough distinct poles (merged peaks of closely spaced targets).
_PAD_REFINE_BUDGET = 60
# A pole this far below the strongest one (ratio of refined J values) is
# treated as unconvincing: spurious endfire bumps and saddle refits sit many
# orders of magnitude under true poles, while genuine poles stay within a
# couple of orders of each other.
_POLE_CONFIDENCE_RATIO = 1e-3


@dataclass(frozen=True)
class NoiseSubspace:
    """Orthonormal basis of the noise subspace plus the full eigenvalue set."""

    basis: np.ndarray  # (M*N, M*N - K), columns orthonormal
    eigenvalues: np.ndarray  # ascending, length M*N

    def __post_init__(self):
        n, L = self.basis.shape
        if L < 1 or L >= n:
            raise ValueError("noise subspace dimension must be in [1, M*N - 1]")
        gram = self.basis.conj().T @ self.basis
        if not np.allclose(gram, np.eye(L), atol=1e-10):
            raise ValueError("noise subspace basis is not orthonormal")


@dataclass(frozen=True)
class AngleGridSpec:
    """Uniform grid over (-90, 90) degrees in each angle, endpoints excluded.

    Points sit at cell centers: -90 + s/2, -90 + 3s/2, ... so the open-interval
    domain of the steering model is respected for any spacing.
    """

    spacing_deg: float = 1.0

    def __post_init__(self):
        if not 0 < self.spacing_deg <= 90:
            raise ValueError("spacing_deg must be in (0, 90]")

    def points_deg(self) -> np.ndarray:
        s = self.spacing_deg
        return np.arange(-90.0 + 0.5 * s, 90.0, s)

    def points_rad(self) -> np.ndarray:
        return np.deg2rad(self.points_deg())


@dataclass(frozen=True)
class PreEstimate:
    """K refined angle pairs for one radar pair, strongest first.

    ``low_quality`` is set when the spectrum produced fewer than K strict
    local maxima and the list had to be padded with the largest remaining
    grid cells.
    """

    angle_pairs: tuple[AnglePair, ...]
    spectrum_values: tuple[float, ...] = field(default=())
    low_quality: bool = False

    def __post_init__(self):
        if self.spectrum_values and len(self.spectrum_values) != len(self.angle_pairs):
            raise ValueError("spectrum_values and angle_pairs length mismatch")


def noise_subspace(covariance: np.ndarray, num_targets: int) -> NoiseSubspace:
    n = covariance.shape[0]
    if covariance.shape != (n, n):
        raise ValueError("covariance must be square")
    if not 1 <= num_targets < n:
        raise ValueError(f"num_targets must be in [1, {n - 1}], got {num_targets}")
    eigenvalues, eigenvectors = np.linalg.eigh(covariance)
    return NoiseSubspace(basis=eigenvectors[:, : n - num_targets], eigenvalues=eigenvalues)


def noise_variance_from_covariance(covariance: np.ndarray, num_targets: int) -> float:
    """Average of the M*N - K smallest covariance eigenvalues."""
    sub = noise_subspace(covariance, num_targets)
    n = covariance.shape[0]
    return float(np.mean(sub.eigenvalues[: n - num_targets]))


def _capped_reciprocal(den: np.ndarray) -> np.ndarray:
    den = np.asarray(den, dtype=float)
    out = np.full(den.shape, SPECTRUM_CAP)
    ok = den >= _DEN_FLOOR
    out[ok] = 1.0 / den[ok]
    return out


def music_value(
    pair: RadarPairGeometry, subspace: NoiseSubspace, aod_rad: float, aoa_rad: float
) -> float:
    a = joint_steering(pair, aod_rad, aoa_rad)
    proj = subspace.basis.conj().T @ a
    den = float(np.real(np.vdot(proj, proj)))
    return float(_capped_reciprocal(np.array(den)))


def music_values(
    pair: RadarPairGeometry,
    subspace: NoiseSubspace,
    aods_rad: np.ndarray,
    aoas_rad: np.ndarray,
) -> np.ndarray:
    """J at paired (aod[i], aoa[i]) angles; arrays must have equal length."""
    A = steering_grid(pair, np.asarray(aods_rad), np.asarray(aoas_rad))
    proj = subspace.basis.conj().T @ A  # (L, C)
    den = np.sum(np.abs(proj) ** 2, axis=0)
    return _capped_reciprocal(den)


def music_spectrum_grid(
    pair: RadarPairGeometry,
    subspace: NoiseSubspace,
    aods_rad: np.ndarray,
    aoas_rad: np.ndarray,
) -> np.ndarray:
    """J on the outer product of angle axes, shape (len(aods), len(aoas)).

    Exploits the Kronecker structure of the steering vector: with G reshaped
    to (M, N, L), the denominator is sum_l |v_tx^T G_l* v_rx|^2, evaluated by
    two small contractions instead of forming every joint steering vector.
    """
    m, n = pair.num_tx, pair.num_rx
    v_tx = np.exp(
        1j * np.pi * np.outer(np.sin(np.asarray(aods_rad)), np.arange(m))
    )  # (A, M)
    v_rx = np.exp(
        1j * np.pi * np.outer(np.sin(np.asarray(aoas_rad)), np.arange(n))
    )  # (B, N)
    g = np.conj(subspace.basis.reshape(m, n, -1))  # (M, N, L), tx is the slow axis
    partial = np.einsum("am,mnl->anl", v_tx, g)
    proj = np.einsum("anl,bn->abl", partial, v_rx)
    den = np.sum(np.abs(proj) ** 2, axis=2)
    return _capped_reciprocal(den)


def _refine_peak(
    pair: RadarPairGeometry,
    subspace: NoiseSubspace,
    aod0_rad: float,
    aoa0_rad: float,
    initial_step_rad: float,
) -> tuple[AnglePair, float]:
    def log_j(x: np.ndarray) -> float:
        if abs(x[0]) >= _ANGLE_BOUND_RAD or abs(x[1]) >= _ANGLE_BOUND_RAD:
            return -np.inf
        return float(np.log(music_value(pair, subspace, float(x[0]), float(x[1]))))

    def grad(x: np.ndarray) -> np.ndarray:
        return finite_difference_gradient(log_j, x, _FD_STEP_RAD)

    bound = np.array([_ANGLE_BOUND_RAD, _ANGLE_BOUND_RAD])
    x = np.array([aod0_rad, aoa0_rad])
    value = log_j(x)
    for _ in range(_REFINE_PASSES):
        res = gradient_ascent(
            log_j,
            grad,
            x,
            initial_step=initial_step_rad,
            min_step=_REFINE_MIN_STEP_RAD,
            max_iter=_REFINE_MAX_ITER,
            lower=-bound,
            upper=bound,
        )
        x, value = res.x, res.value
        if res.iterations < _REFINE_MAX_ITER:
            break
    angle = AnglePair(aod=float(x[0]), aoa=float(x[1]))
    return angle, float(np.exp(value))


def _unrefined_selection(
    spectrum: np.ndarray, pts: np.ndarray, num_targets: int, cells: list
) -> PreEstimate:
    """Raw grid selection: K largest strict maxima, padded by largest cells."""
    chosen = cells[:num_targets]
    low_quality = len(chosen) < num_targets
    if low_quality:
        taken = set(chosen)
        order = np.argsort(spectrum, axis=None)[::-1]
        for flat in order:
            cell = tuple(int(v) for v in np.unravel_index(flat, spectrum.shape))
            if cell not in taken:
                taken.add(cell)
                chosen.append(cell)
                if len(chosen) == num_targets:
                    break
    pairs = [
        (AnglePair(aod=float(pts[i]), aoa=float(pts[j])), float(spectrum[i, j]))
        for i, j in chosen
    ]
    pairs.sort(key=lambda p: -p[1])
    return PreEstimate(
        angle_pairs=tuple(p[0] for p in pairs),
        spectrum_values=tuple(p[1] for p in pairs),
        low_quality=low_quality,
    )


def pre_estimate(
    pair: RadarPairGeometry,
    covariance: np.ndarray,
    num_targets: int,
    grid: AngleGridSpec = AngleGridSpec(),
    refine: bool = True,
) -> PreEstimate:
    """K strongest distinct spectrum peaks for one pair, ascent-refined.

    Strict local maxima of the grid spectrum (8-neighborhood) are polished
    by gradient ascent on log J; refined peaks landing on the same pole are
    merged and the K largest distinct poles win. Ranking by refined rather
    than raw cell value matters when two closely spaced targets spawn a
    cluster of grid maxima: the ripple cells between them refine onto the
    same pole and would otherwise crowd out a weaker isolated target.

    When the maxima yield fewer than K distinct poles (merged peaks, pure
    noise) the largest remaining grid cells are refined as well, since the
    ridge cells of an unresolved target often slide into its pole even when
    no strict maximum survived next to it. The result is then flagged
    ``low_quality``. With ``refine=False`` the raw grid selection (K largest
    maxima cells, padded by the largest remaining cells) is returned.
    """
    subspace = noise_subspace(covariance, num_targets)
    pts = grid.points_rad()
    spectrum = music_spectrum_grid(pair, subspace, pts, pts)
    cells = local_maxima_2d(spectrum)
    cells.sort(key=lambda c: -spectrum[c])
    if not refine:
        return _unrefined_selection(spectrum, pts, num_targets, cells)

    poles: list[tuple[AnglePair, float]] = []

    def note(ang: AnglePair, val: float) -> None:
        for idx, (known, known_val) in enumerate(poles):
            if (
                abs(ang.aod - known.aod) <= _DEDUP_EPS_RAD
                and abs(ang.aoa - known.aoa) <= _DEDUP_EPS_RAD
            ):
                if val > known_val:
                    poles[idx] = (ang, val)
                return
        poles.append((ang, val))

    step0 = np.deg2rad(grid.spacing_deg)
    sources: list[tuple[int, int]] = []
    # Ripple maxima far down the ranking never refine into a winning pole;
    # polishing a bounded prefix keeps the cost independent of grid size.
    for i, j in cells[: 2 * num_targets + 10]:
        sources.append((i, j))
        note(*_refine_peak(pair, subspace, float(pts[i]), float(pts[j]), step0))

    def confident_count() -> int:
        if not poles:
            return 0
        best = max(v for _, v in poles)
        return sum(v >= _POLE_CONFIDENCE_RATIO * best for _, v in poles)

    low_quality = len(cells) < num_targets or confident_count() < num_targets
    if low_quality:
        order = np.argsort(spectrum, axis=None)[::-1]
        used = set(cells)
        budget = _PAD_REFINE_BUDGET
        for flat in order:
            if confident_count() >= num_targets or budget <= 0:
                break
            cell = tuple(int(v) for v in np.unravel_index(flat, spectrum.shape))
            if cell in used:
                continue
            used.add(cell)
            # Cells bordering an already-refined start just repeat its pole.
            if any(
                max(abs(cell[0] - si), abs(cell[1] - sj)) <= 1 for si, sj in sources
            ):
                continue
            sources.append(cell)
            budget -= 1
            note(
                *_refine_peak(
                    pair, subspace, float(pts[cell[0]]), float(pts[cell[1]]), step0
                )
            )
        for flat in order:
            if len(poles) >= num_targets:
                break
            cell = tuple(int(v) for v in np.unravel_index(flat, spectrum.shape))
            if cell in used:
                continue
            used.add(cell)
            note(
                AnglePair(aod=float(pts[cell[0]]), aoa=float(pts[cell[1]])),
                float(spectrum[cell]),
            )

    poles.sort(key=lambda p: -p[1])
    top = poles[:num_targets]
    return PreEstimate(
        angle_pairs=tuple(p[0] for p in top),
        spectrum_values=tuple(p[1] for p in top),
        low_quality=low_quality,
    )


def dump_spectrum_csv(path, aods_rad: np.ndarray, aoas_rad: np.ndarray, spectrum: np.ndarray):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("aod_deg,aoa_deg,value\n")
        for i, aod in enumerate(np.rad2deg(aods_rad)):
            for j, aoa in enumerate(np.rad2deg(aoas_rad)):
                fh.write(f"{fmt(float(aod))},{fmt(float(aoa))},{fmt(float(spectrum[i, j]))}\n")
