"""OFDM channel synthesis: coefficients, noise, sample covariance."""

import numpy as np
import pytest

from conftest import (
    TEST_COEFFS,
    TEST_COEFFS_DET,
    TEST_OFDM,
    TX_LEFT,
    make_pair,
)
from mlasloc.channel import (
    SPEED_OF_LIGHT,
    CoefficientModel,
    OfdmParams,
    RadarPairObservation,
    bistatic_ranges,
    calibrate_noise_for_snr,
    path_coefficients,
    synthesize_observation,
)
from mlasloc.geometry import Scene, angles_for_target, joint_steering


def _scene(targets):
    return Scene(pairs=(make_pair(TX_LEFT),), targets=np.asarray(targets, float))


def _range_amplitude(model, ofdm, d_tx, d_rx):
    return model.reference_amplitude * ofdm.carrier_wavelength_m**2 / (
        (4.0 * np.pi) ** 1.5 * d_tx * d_rx
    )


def test_bistatic_ranges_hand_computed():
    pair = make_pair(TX_LEFT)
    d_tx, d_rx = bistatic_ranges(pair, [0.0, 8.0])
    assert d_tx == pytest.approx(10.0)  # (-6,0) to (0,8)
    assert d_rx == pytest.approx(8.0)


def test_deterministic_coefficients_amplitude_and_ramp():
    scene = _scene([[0.0, 8.0], [3.0, 6.0]])
    pair = scene.pairs[0]
    coeffs = path_coefficients(
        scene, pair, TEST_OFDM, TEST_COEFFS_DET, np.random.default_rng(3)
    )
    assert coeffs.shape == (TEST_OFDM.num_subcarriers, 2)
    for k, target in enumerate(scene.targets):
        d_tx, d_rx = bistatic_ranges(pair, target)
        amp = _range_amplitude(TEST_COEFFS_DET, TEST_OFDM, d_tx, d_rx)
        # fixed amplitude on every subcarrier
        np.testing.assert_allclose(np.abs(coeffs[:, k]), amp, rtol=1e-12)
        # the random phase cancels in consecutive ratios, leaving the delay ramp
        tau = (d_tx + d_rx) / SPEED_OF_LIGHT
        expected_step = np.exp(-2j * np.pi * TEST_OFDM.subcarrier_spacing_hz * tau)
        np.testing.assert_allclose(
            coeffs[1:, k] / coeffs[:-1, k], expected_step, atol=1e-12
        )


def test_deterministic_variant_single_phase_per_target():
    scene = _scene([[0.0, 8.0], [3.0, 6.0]])
    a = path_coefficients(
        scene, scene.pairs[0], TEST_OFDM, TEST_COEFFS_DET, np.random.default_rng(5)
    )
    b = path_coefficients(
        scene, scene.pairs[0], TEST_OFDM, TEST_COEFFS_DET, np.random.default_rng(6)
    )
    ratio = b[0] / a[0]
    np.testing.assert_allclose(np.abs(ratio), 1.0, atol=1e-12)
    assert not np.allclose(ratio, ratio[0])  # phases differ across targets


def test_gaussian_coefficients_reproducible_and_power_calibrated():
    scene = _scene([[1.0, 7.0]])
    ofdm = OfdmParams(4096, 78125.0, 0.0517)
    a = path_coefficients(scene, scene.pairs[0], ofdm, TEST_COEFFS, np.random.default_rng(11))
    b = path_coefficients(scene, scene.pairs[0], ofdm, TEST_COEFFS, np.random.default_rng(11))
    np.testing.assert_array_equal(a, b)
    c = path_coefficients(scene, scene.pairs[0], ofdm, TEST_COEFFS, np.random.default_rng(12))
    assert not np.array_equal(a, c)
    d_tx, d_rx = bistatic_ranges(scene.pairs[0], scene.targets[0])
    amp = _range_amplitude(TEST_COEFFS, ofdm, d_tx, d_rx)
    mean_power = float(np.mean(np.abs(a) ** 2))
    assert mean_power == pytest.approx(amp**2, rel=0.1)


def test_calibrate_noise_for_snr_matches_direct_formula():
    rng = np.random.default_rng(0)
    arrays = [rng.standard_normal((8, 2)) + 1j * rng.standard_normal((8, 2)),
              rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3))]
    for snr_db in (-10.0, 0.0, 17.5):
        sigma2 = calibrate_noise_for_snr(arrays, snr_db)
        pooled = np.concatenate([np.abs(a).ravel() ** 2 for a in arrays])
        assert sigma2 == pytest.approx(pooled.mean() / 10 ** (snr_db / 10), rel=1e-12)
    with pytest.raises(ValueError):
        calibrate_noise_for_snr([], 0.0)
    with pytest.raises(ValueError):
        calibrate_noise_for_snr([np.zeros((4, 1))], 0.0)


def test_covariance_matches_outer_product_average():
    scene = _scene([[0.0, 8.0], [3.0, 6.0]])
    obs = synthesize_observation(
        scene, scene.pairs[0], TEST_OFDM, TEST_COEFFS, 0.3, np.random.default_rng(21)
    )
    q = obs.channels.shape[0]
    oracle = np.zeros_like(obs.covariance)
    for h in obs.channels:
        oracle += np.outer(h, h.conj())
    oracle /= q
    np.testing.assert_allclose(obs.covariance, oracle, atol=1e-12 * np.abs(oracle).max())
    # Hermitian PSD comes with the construction
    np.testing.assert_allclose(obs.covariance, obs.covariance.conj().T, atol=1e-20)
    assert np.linalg.eigvalsh(obs.covariance).min() > -1e-12


def test_noiseless_single_target_covariance_is_rank_one_on_steering():
    scene = _scene([[2.0, 9.0]])
    pair = scene.pairs[0]
    obs = synthesize_observation(
        scene, pair, TEST_OFDM, TEST_COEFFS, 0.0, np.random.default_rng(2)
    )
    w, v = np.linalg.eigh(obs.covariance)
    assert w[-1] > 0
    assert w[-2] < 1e-10 * w[-1]  # numerically rank one
    ang = angles_for_target(pair, scene.targets[0])
    a = joint_steering(pair, ang.aod, ang.aoa)
    top = v[:, -1]
    overlap = abs(np.vdot(top, a)) / (np.linalg.norm(a))
    assert overlap == pytest.approx(1.0, abs=1e-8)


def test_noise_power_reaches_requested_level():
    scene = _scene([[0.0, 8.0]])
    pair = scene.pairs[0]
    ofdm = OfdmParams(2048, 78125.0, 0.0517)
    coeffs = path_coefficients(scene, pair, ofdm, TEST_COEFFS, np.random.default_rng(4))
    sigma2 = 0.7
    obs = synthesize_observation(
        scene, pair, ofdm, TEST_COEFFS, sigma2, np.random.default_rng(8),
        coefficients=coeffs,
    )
    ang = angles_for_target(pair, scene.targets[0])
    a = joint_steering(pair, ang.aod, ang.aoa)
    clean = coeffs @ a[None, :]
    noise = obs.channels - clean
    assert float(np.mean(np.abs(noise) ** 2)) == pytest.approx(sigma2, rel=0.05)


def test_observation_validation_rejects_tampered_covariance():
    scene = _scene([[0.0, 8.0]])
    obs = synthesize_observation(
        scene, scene.pairs[0], TEST_OFDM, TEST_COEFFS, 0.1, np.random.default_rng(9)
    )
    bad = obs.covariance.copy()
    bad[0, 1] += 0.5 * np.abs(bad).max()
    with pytest.raises(ValueError):
        RadarPairObservation(obs.channels, bad, obs.noise_variance)
    with pytest.raises(ValueError):
        RadarPairObservation(obs.channels, obs.covariance, -1.0)


def test_ofdm_and_model_validation():
    with pytest.raises(ValueError):
        OfdmParams(0, 78125.0, 0.05)
    with pytest.raises(ValueError):
        OfdmParams(64, -1.0, 0.05)
    with pytest.raises(ValueError):
        OfdmParams(64, 78125.0, 0.0)
    with pytest.raises(ValueError):
        CoefficientModel(variant="complex-gaussian", reference_amplitude=0.0)
    with pytest.raises(ValueError):
        CoefficientModel(variant="swerling-9")
