"""Synthetic per-subcarrier channel vectors and sample covariances.

Each radar pair observes, per subcarrier q, a noisy channel vector
``h_q = A @ alpha_q + n_q`` where A stacks the joint steering vectors of the
targets and ``alpha_q`` carries per-target bistatic path coefficients: a
radar-range-equation amplitude, a linear phase ramp across subcarriers set by
the bistatic delay, and a stochastic component chosen by the coefficient
model. The subcarrier-averaged outer product of the noisy vectors is the
sample covariance consumed by all estimators.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import RadarPairGeometry, Scene, angles_for_target, steering_matrix

SPEED_OF_LIGHT = 299_792_458.0

VARIANT_DETERMINISTIC = "deterministic-amplitude-random-phase"
VARIANT_GAUSSIAN = "complex-gaussian"
COEFFICIENT_VARIANTS = (VARIANT_DETERMINISTIC, VARIANT_GAUSSIAN)


@dataclass(frozen=True)
class OfdmParams:
    """Waveform numerology of one radar pair."""

    num_subcarriers: int
    subcarrier_spacing_hz: float
    carrier_wavelength_m: float

    def __post_init__(self):
        if self.num_subcarriers < 1:
            raise ValueError("num_subcarriers must be >= 1")
        if self.subcarrier_spacing_hz <= 0:
            raise ValueError("subcarrier_spacing_hz must be > 0")
        if self.carrier_wavelength_m <= 0:
            raise ValueError("carrier_wavelength_m must be > 0")


@dataclass(frozen=True)
class CoefficientModel:
    """How the stochastic part of each path coefficient is drawn.

    ``deterministic-amplitude-random-phase`` keeps the range-equation
    amplitude fixed and draws one uniform phase per target and realization.
    ``complex-gaussian`` redraws the whole amplitude-phase factor as a
    circularly-symmetric Gaussian, independently per subcarrier and target,
    with the same mean power; this is the decorrelated reference
    configuration for subspace estimation.
    """

    variant: str = VARIANT_GAUSSIAN
    reference_amplitude: float = 1.0

    def __post_init__(self):
        if self.variant not in COEFFICIENT_VARIANTS:
            raise ValueError(f"unknown coefficient variant {self.variant!r}")
        if self.reference_amplitude <= 0:
            raise ValueError("reference_amplitude must be > 0")


@dataclass(frozen=True)
class RadarPairObservation:
    """Noisy channel vectors of one pair plus their sample covariance.

    channels has shape (Q, M*N); covariance is the subcarrier average of
    ``h h^H`` and is validated Hermitian and positive semidefinite.
    """

    channels: np.ndarray
    covariance: np.ndarray
    noise_variance: float

    def __post_init__(self):
        q, dim = self.channels.shape
        if self.covariance.shape != (dim, dim):
            raise ValueError("covariance shape does not match channel dimension")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be >= 0")
        scale = float(np.abs(self.covariance).max()) or 1.0
        if np.abs(self.covariance - self.covariance.conj().T).max() > 1e-12 * scale:
            raise ValueError("covariance is not Hermitian")
        trace = float(np.trace(self.covariance).real)
        eigvals = np.linalg.eigvalsh(self.covariance)
        if eigvals.min() < -1e-10 * max(trace, 1e-300):
            raise ValueError("covariance is not positive semidefinite")
        recomputed = (self.channels.conj().T @ self.channels).conj() / q
        if np.abs(recomputed - self.covariance).max() > 1e-12 * scale:
            raise ValueError("covariance inconsistent with stored channels")

    @property
    def num_subcarriers(self) -> int:
        return self.channels.shape[0]


def bistatic_ranges(pair: RadarPairGeometry, target) -> tuple[float, float]:
    """(STx-to-target, target-to-SRx) distances in meters."""
    t = np.asarray(target, dtype=float)
    return (
        float(np.linalg.norm(t - pair.stx.origin)),
        float(np.linalg.norm(t - pair.srx.origin)),
    )


def path_coefficients(
    scene: Scene,
    pair: RadarPairGeometry,
    ofdm: OfdmParams,
    model: CoefficientModel,
    rng: np.random.Generator,
) -> np.ndarray:
    """Per-subcarrier path coefficients for all targets, shape (Q, K).

    Entry (q, k) combines the bistatic range-equation amplitude
    ``g_k = ref * lambda^2 / ((4 pi)^{3/2} d_tx d_rx)``, the delay phase ramp
    ``exp(-j 2 pi q df tau_k)``, and the model's stochastic factor.
    """
    q_idx = np.arange(ofdm.num_subcarriers, dtype=float)
    amps = np.empty(scene.num_targets)
    delays = np.empty(scene.num_targets)
    for k, target in enumerate(scene.targets):
        d_tx, d_rx = bistatic_ranges(pair, target)
        if d_tx < 1e-9 or d_rx < 1e-9:
            raise ValueError("target range must be positive")
        delays[k] = (d_tx + d_rx) / SPEED_OF_LIGHT
        amps[k] = (
            model.reference_amplitude
            * ofdm.carrier_wavelength_m**2
            / ((4.0 * np.pi) ** 1.5 * d_tx * d_rx)
        )
    ramp = np.exp(-2j * np.pi * ofdm.subcarrier_spacing_hz * np.outer(q_idx, delays))
    if model.variant == VARIANT_DETERMINISTIC:
        phases = rng.uniform(0.0, 2.0 * np.pi, size=scene.num_targets)
        factor = amps * np.exp(1j * phases)
        return ramp * factor[None, :]
    shape = (ofdm.num_subcarriers, scene.num_targets)
    draws = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    return ramp * draws * amps[None, :]


def synthesize_observation(
    scene: Scene,
    pair: RadarPairGeometry,
    ofdm: OfdmParams,
    model: CoefficientModel,
    noise_variance: float,
    rng: np.random.Generator,
    coefficients: np.ndarray | None = None,
) -> RadarPairObservation:
    """Noisy channel vectors for one pair and their sample covariance.

    When ``coefficients`` is given (e.g. drawn earlier for noise
    calibration) the model is not re-sampled; only the noise is drawn here.
    Noise is circularly-symmetric complex Gaussian, i.i.d. across antennas
    and subcarriers, with per-entry variance ``noise_variance``.
    """
    if noise_variance < 0:
        raise ValueError("noise_variance must be >= 0")
    if coefficients is None:
        coefficients = path_coefficients(scene, pair, ofdm, model, rng)
    a_mat = steering_matrix(
        pair, [angles_for_target(pair, t) for t in scene.targets]
    )
    clean = coefficients @ a_mat.T
    shape = clean.shape
    noise = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.sqrt(
        noise_variance / 2.0
    )
    channels = clean + noise
    covariance = (channels.conj().T @ channels).conj() / ofdm.num_subcarriers
    return RadarPairObservation(
        channels=channels, covariance=covariance, noise_variance=noise_variance
    )


def calibrate_noise_for_snr(coefficients, target_snr_db: float) -> float:
    """Noise variance making mean(|alpha|^2) / sigma^2 hit the target SNR.

    ``coefficients`` is an iterable of per-pair (Q, K) coefficient arrays;
    the mean runs over every pair, subcarrier, and path. A single variance
    is shared by all pairs.
    """
    powers = [np.abs(np.asarray(c)) ** 2 for c in coefficients]
    if not powers:
        raise ValueError("need at least one coefficient array")
    mean_power = float(np.mean(np.concatenate([p.ravel() for p in powers])))
    if mean_power <= 0:
        raise ValueError("coefficients are all zero; SNR undefined")
    return mean_power / 10.0 ** (target_snr_db / 10.0)


def dump_observation_csv(obs: RadarPairObservation, path) -> None:
    """Debug dump: one row per subcarrier, interleaved re/im channel entries."""
    with open(path, "w", encoding="utf-8") as fh:
        dim = obs.channels.shape[1]
        cols = ["subcarrier"]
        for i in range(dim):
            cols += [f"re_{i}", f"im_{i}"]
        fh.write(",".join(cols) + "\n")
        for q, row in enumerate(obs.channels):
            parts = [str(q)]
            for v in row:
                parts += [repr(float(v.real)), repr(float(v.imag))]
            fh.write(",".join(parts) + "\n")
