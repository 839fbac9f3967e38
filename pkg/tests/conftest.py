"""Shared fixtures: canonical two-pair geometry and noiseless scene builders."""

from __future__ import annotations

import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mlasloc.channel import (
    VARIANT_DETERMINISTIC,
    VARIANT_GAUSSIAN,
    CoefficientModel,
    OfdmParams,
    synthesize_observation,
)
from mlasloc.geometry import ArraySpec, RadarPairGeometry, Scene, angles_for_target
from mlasloc.likelihood import PerPairContext
from mlasloc.subspace import PreEstimate

settings.register_profile(
    "research",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("research")

UP = np.array([0.0, 1.0])
TX_LEFT = np.array([-6.0, 0.0])
TX_RIGHT = np.array([6.0, 0.0])
RX_SHARED = np.array([0.0, 0.0])

# Small numerology for unit tests; the default config uses 1024 subcarriers.
TEST_OFDM = OfdmParams(
    num_subcarriers=64,
    subcarrier_spacing_hz=78125.0,
    carrier_wavelength_m=0.0517,
)
TEST_COEFFS = CoefficientModel(variant=VARIANT_GAUSSIAN, reference_amplitude=1.0e4)
TEST_COEFFS_DET = CoefficientModel(
    variant=VARIANT_DETERMINISTIC, reference_amplitude=1.0e4
)


def ula(origin, n: int = 4) -> ArraySpec:
    return ArraySpec(origin=np.asarray(origin, dtype=float), boresight=UP, num_elements=n)


def make_pair(tx_origin, pair_id: int = 0, m: int = 4, n: int = 4) -> RadarPairGeometry:
    return RadarPairGeometry(stx=ula(tx_origin, m), srx=ula(RX_SHARED, n), id=pair_id)


@pytest.fixture
def pair_left() -> RadarPairGeometry:
    return make_pair(TX_LEFT, 0)


@pytest.fixture
def pair_right() -> RadarPairGeometry:
    return make_pair(TX_RIGHT, 1)


@pytest.fixture
def two_pairs(pair_left, pair_right):
    return (pair_left, pair_right)


def exact_pre_estimate(pair: RadarPairGeometry, targets) -> PreEstimate:
    """Pre-estimate holding the exact geometric truth angles."""
    targets = np.asarray(targets, dtype=float).reshape(-1, 2)
    return PreEstimate(
        angle_pairs=tuple(angles_for_target(pair, t) for t in targets),
        spectrum_values=(),
        low_quality=False,
    )


def noiseless_context(
    pair: RadarPairGeometry,
    targets,
    ofdm: OfdmParams = TEST_OFDM,
    model: CoefficientModel = TEST_COEFFS,
    seed: int = 0,
    pre: PreEstimate | None = None,
) -> PerPairContext:
    """Context with a noise-free sample covariance and truth pre-estimates."""
    targets = np.asarray(targets, dtype=float).reshape(-1, 2)
    scene = Scene(pairs=(pair,), targets=targets)
    obs = synthesize_observation(
        scene, pair, ofdm, model, 0.0, np.random.default_rng(seed)
    )
    return PerPairContext(
        geometry=pair,
        covariance=obs.covariance,
        noise_variance=0.0,
        num_subcarriers=ofdm.num_subcarriers,
        pre_estimates=pre if pre is not None else exact_pre_estimate(pair, targets),
    )


def random_hermitian_psd(rng: np.random.Generator, n: int, extra_rank: int = 0) -> np.ndarray:
    """Random PSD matrix; ``extra_rank`` columns beyond n keep it well conditioned."""
    cols = n + extra_rank
    x = rng.standard_normal((n, cols)) + 1j * rng.standard_normal((n, cols))
    return (x @ x.conj().T) / cols


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None) if mod else None
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
