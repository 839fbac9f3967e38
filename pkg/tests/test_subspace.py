"""Noise subspace extraction and the 2-D spectrum pre-estimator."""

import numpy as np
import pytest

from conftest import TEST_COEFFS, TEST_OFDM, TX_LEFT, make_pair, noiseless_context
from mlasloc.geometry import angles_for_target, joint_steering, steering_matrix
from mlasloc.subspace import (
    SPECTRUM_CAP,
    AngleGridSpec,
    NoiseSubspace,
    PreEstimate,
    music_spectrum_grid,
    music_value,
    music_values,
    noise_subspace,
    noise_variance_from_covariance,
    pre_estimate,
)


def _signal_plus_noise_covariance(pair, targets, sigma2, powers=None):
    """Exact ensemble covariance A S A^H + sigma2 I for uncorrelated paths."""
    targets = np.asarray(targets, float).reshape(-1, 2)
    A = steering_matrix(pair, [angles_for_target(pair, t) for t in targets])
    if powers is None:
        powers = np.ones(targets.shape[0])
    return A @ np.diag(powers).astype(complex) @ A.conj().T + sigma2 * np.eye(A.shape[0])


def test_noise_subspace_orthonormal_and_orthogonal_to_signal():
    pair = make_pair(TX_LEFT)
    targets = [[-2.0, 8.0], [3.0, 6.0]]
    R = _signal_plus_noise_covariance(pair, targets, sigma2=0.01)
    sub = noise_subspace(R, num_targets=2)
    n = pair.channel_dim
    assert sub.basis.shape == (n, n - 2)
    np.testing.assert_allclose(
        sub.basis.conj().T @ sub.basis, np.eye(n - 2), atol=1e-10
    )
    for t in targets:
        ang = angles_for_target(pair, t)
        a = joint_steering(pair, ang.aod, ang.aoa)
        assert np.linalg.norm(sub.basis.conj().T @ a) < 1e-8
    assert np.all(np.diff(sub.eigenvalues) >= -1e-12)


def test_noise_variance_recovered_from_exact_covariance():
    pair = make_pair(TX_LEFT)
    R = _signal_plus_noise_covariance(pair, [[-2.0, 8.0], [3.0, 6.0]], sigma2=0.37)
    assert noise_variance_from_covariance(R, 2) == pytest.approx(0.37, rel=1e-10)


def test_noise_subspace_basis_validation():
    with pytest.raises(ValueError):
        NoiseSubspace(basis=np.ones((4, 2), dtype=complex), eigenvalues=np.ones(4))
    with pytest.raises(ValueError):
        NoiseSubspace(basis=np.eye(4, 4, dtype=complex), eigenvalues=np.ones(4))


def test_music_value_peaks_at_truth():
    pair = make_pair(TX_LEFT)
    target = [1.5, 7.0]
    R = _signal_plus_noise_covariance(pair, [target], sigma2=0.0)
    sub = noise_subspace(R, 1)
    ang = angles_for_target(pair, target)
    at_truth = music_value(pair, sub, ang.aod, ang.aoa)
    assert at_truth >= 0.01 * SPECTRUM_CAP  # essentially a pole
    off = music_value(pair, sub, ang.aod + 0.3, ang.aoa - 0.3)
    assert off < 1e-6 * at_truth


def test_music_values_matches_scalar_loop():
    pair = make_pair(TX_LEFT)
    R = _signal_plus_noise_covariance(pair, [[-2.0, 8.0], [3.0, 6.0]], sigma2=0.1)
    sub = noise_subspace(R, 2)
    rng = np.random.default_rng(0)
    aods = rng.uniform(-1.2, 1.2, 30)
    aoas = rng.uniform(-1.2, 1.2, 30)
    vec = music_values(pair, sub, aods, aoas)
    for i in range(30):
        assert vec[i] == pytest.approx(music_value(pair, sub, aods[i], aoas[i]), rel=1e-10)


def test_music_spectrum_grid_matches_pointwise_values():
    pair = make_pair(TX_LEFT, m=3, n=4)
    R = _signal_plus_noise_covariance(pair, [[0.0, 9.0]], sigma2=0.05)
    sub = noise_subspace(R, 1)
    aods = np.deg2rad(np.array([-40.0, -5.0, 12.0]))
    aoas = np.deg2rad(np.array([-21.0, 3.0, 30.0, 55.0]))
    grid = music_spectrum_grid(pair, sub, aods, aoas)
    assert grid.shape == (3, 4)
    for i in range(3):
        for j in range(4):
            assert grid[i, j] == pytest.approx(
                music_value(pair, sub, aods[i], aoas[j]), rel=1e-10
            )


def test_angle_grid_points_are_cell_centers():
    spec = AngleGridSpec(spacing_deg=1.0)
    pts = spec.points_deg()
    assert pts.size == 180
    assert pts[0] == pytest.approx(-89.5)
    assert pts[-1] == pytest.approx(89.5)
    np.testing.assert_allclose(np.diff(pts), 1.0)
    np.testing.assert_allclose(spec.points_rad(), np.deg2rad(pts))
    with pytest.raises(ValueError):
        AngleGridSpec(spacing_deg=0.0)


def test_pre_estimate_recovers_noiseless_angles():
    pair = make_pair(TX_LEFT)
    targets = np.array([[-2.5, 8.0], [3.0, 6.0]])
    ctx = noiseless_context(pair, targets)
    est = pre_estimate(pair, ctx.covariance, 2)
    assert not est.low_quality
    truth = [angles_for_target(pair, t) for t in targets]
    # match each truth angle pair to its closest estimate
    for ang in truth:
        errs = [
            max(abs(ang.aod - e.aod), abs(ang.aoa - e.aoa)) for e in est.angle_pairs
        ]
        assert np.rad2deg(min(errs)) < 0.1


def test_pre_estimate_unrefined_mode_stays_on_grid():
    pair = make_pair(TX_LEFT)
    ctx = noiseless_context(pair, [[1.0, 7.0]])
    est = pre_estimate(pair, ctx.covariance, 1, refine=False)
    pts = set(np.round(AngleGridSpec().points_rad(), 12))
    for ap in est.angle_pairs:
        assert round(ap.aod, 12) in pts and round(ap.aoa, 12) in pts


def test_pre_estimate_flags_pure_noise_as_low_quality():
    pair = make_pair(TX_LEFT)
    n = pair.channel_dim
    est = pre_estimate(pair, np.eye(n, dtype=complex), 3)
    assert isinstance(est, PreEstimate)
    assert len(est.angle_pairs) == 3
    assert est.low_quality


def test_pre_estimate_requested_count_always_returned():
    # two coincident targets leave only one pole; the list is still length K
    pair = make_pair(TX_LEFT)
    ctx = noiseless_context(pair, [[1.0, 7.0], [1.0, 7.0]])
    est = pre_estimate(pair, ctx.covariance, 2)
    assert len(est.angle_pairs) == 2
