"""Array geometry, signed angles, steering vectors, ray intersection."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import RX_SHARED, TX_LEFT, make_pair, ula
from mlasloc.geometry import (
    PARALLEL_TOL_RAD,
    AnglePair,
    ArraySpec,
    FieldOfViewError,
    RadarPairGeometry,
    Scene,
    angles_for_target,
    clockwise_normal,
    grid_angles,
    joint_steering,
    ray_direction,
    ray_intersection,
    signed_angle,
    steering_grid,
    steering_matrix,
    steering_vector,
    target_rays,
)

# Targets inside this box are in front of every default array and the two
# rays cross at a healthy angle, so round trips are well conditioned.
xs_front = st.floats(-8.0, 8.0)
ys_front = st.floats(0.5, 15.0)
angles_open = st.floats(-1.55, 1.55)


def test_clockwise_normal_of_up_points_right():
    np.testing.assert_allclose(clockwise_normal(np.array([0.0, 1.0])), [1.0, 0.0])
    np.testing.assert_allclose(clockwise_normal(np.array([1.0, 0.0])), [0.0, -1.0])


def test_signed_angle_sign_convention():
    arr = ula([0.0, 0.0])
    # boresight (0, 1): +45 deg to the right, -45 deg to the left
    assert signed_angle(arr, [1.0, 1.0]) == pytest.approx(np.pi / 4)
    assert signed_angle(arr, [-1.0, 1.0]) == pytest.approx(-np.pi / 4)
    assert signed_angle(arr, [0.0, 3.0]) == pytest.approx(0.0)


def test_signed_angle_rejects_points_behind_and_origin():
    arr = ula([0.0, 0.0])
    with pytest.raises(FieldOfViewError):
        signed_angle(arr, [0.0, -1.0])
    with pytest.raises(FieldOfViewError):
        signed_angle(arr, [1.0, 0.0])  # exactly sideways: along = 0
    with pytest.raises(ValueError):
        signed_angle(arr, [0.0, 0.0])


def test_signed_angle_translated_and_rotated_array():
    # boresight +x at (2, 3): a point straight ahead has angle 0, below is +.
    arr = ArraySpec(origin=[2.0, 3.0], boresight=[1.0, 0.0], num_elements=4)
    assert signed_angle(arr, [5.0, 3.0]) == pytest.approx(0.0)
    assert signed_angle(arr, [3.0, 2.0]) == pytest.approx(np.pi / 4)


@given(xs_front, ys_front)
def test_steering_entries_unit_modulus_and_norm(x, y):
    pair = make_pair(TX_LEFT)
    ang = angles_for_target(pair, [x, y])
    a = joint_steering(pair, ang.aod, ang.aoa)
    assert a.shape == (pair.channel_dim,)
    np.testing.assert_allclose(np.abs(a), 1.0, atol=1e-12)
    assert np.linalg.norm(a) == pytest.approx(np.sqrt(pair.channel_dim), rel=1e-12)


@given(angles_open)
def test_steering_vector_phase_progression(theta):
    v = steering_vector(theta, 6)
    assert v[0] == 1.0 + 0.0j
    # element m carries phase pi * m * sin(theta)
    ratios = v[1:] / v[:-1]
    np.testing.assert_allclose(ratios, np.exp(1j * np.pi * np.sin(theta)), atol=1e-12)


def test_steering_vector_rejects_endfire():
    with pytest.raises(ValueError):
        steering_vector(np.pi / 2, 4)
    with pytest.raises(ValueError):
        steering_vector(-1.7, 4)
    with pytest.raises(ValueError):
        steering_vector(0.0, 0)


@given(angles_open, angles_open)
def test_joint_steering_matches_kron(aod, aoa):
    pair = make_pair(TX_LEFT, m=3, n=5)
    a = joint_steering(pair, aod, aoa)
    oracle = np.kron(steering_vector(aod, 3), steering_vector(aoa, 5))
    np.testing.assert_allclose(a, oracle, atol=1e-14)


def test_steering_matrix_stacks_columns():
    pair = make_pair(TX_LEFT)
    angles = [AnglePair(0.1, -0.2), AnglePair(-0.5, 0.4)]
    A = steering_matrix(pair, angles)
    assert A.shape == (16, 2)
    for k, ap in enumerate(angles):
        np.testing.assert_array_equal(A[:, k], joint_steering(pair, ap.aod, ap.aoa))
    with pytest.raises(ValueError):
        steering_matrix(pair, [])


def test_steering_grid_matches_joint_steering_columns():
    pair = make_pair(TX_LEFT, m=4, n=3)
    rng = np.random.default_rng(7)
    aods = rng.uniform(-1.4, 1.4, size=20)
    aoas = rng.uniform(-1.4, 1.4, size=20)
    grid = steering_grid(pair, aods, aoas)
    assert grid.shape == (12, 20)
    for c in range(20):
        np.testing.assert_allclose(
            grid[:, c], joint_steering(pair, aods[c], aoas[c]), atol=1e-12
        )


def test_grid_angles_agrees_with_scalar_path():
    pair = make_pair(TX_LEFT)
    xs = np.array([-3.0, 0.0, 4.0, 2.5])
    ys = np.array([5.0, 8.0, 11.0, 6.5])
    aod, aoa, in_view = grid_angles(pair, xs, ys)
    assert in_view.all()
    for i in range(xs.size):
        ang = angles_for_target(pair, [xs[i], ys[i]])
        assert aod[i] == pytest.approx(ang.aod, abs=1e-12)
        assert aoa[i] == pytest.approx(ang.aoa, abs=1e-12)


def test_grid_angles_masks_cells_behind_either_array():
    pair = make_pair(TX_LEFT)
    aod, aoa, in_view = grid_angles(pair, [0.0, 0.0], [-1.0, 1.0])
    assert not in_view[0] and in_view[1]


@given(xs_front, ys_front)
def test_angle_round_trip_recovers_position(x, y):
    pair = make_pair(TX_LEFT)
    ang = angles_for_target(pair, [x, y])
    (o1, d1), (o2, d2) = target_rays(pair, ang)
    inter = ray_intersection(o1, d1, o2, d2)
    assert not inter.degenerate
    assert np.linalg.norm(inter.point - np.array([x, y])) < 1e-9


def test_ray_intersection_flags_near_parallel():
    inter = ray_intersection([0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0])
    assert inter.degenerate
    assert inter.crossing_angle_rad < PARALLEL_TOL_RAD
    with pytest.raises(ValueError):
        ray_intersection([0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0])


def test_ray_direction_matches_angle_definition():
    arr = ula([0.0, 0.0])
    d = ray_direction(arr, np.pi / 4)
    np.testing.assert_allclose(d, [np.sqrt(0.5), np.sqrt(0.5)], atol=1e-12)
    # the named angle of a point along the ray is the angle itself
    p = arr.origin + 3.0 * d
    assert signed_angle(arr, p) == pytest.approx(np.pi / 4, abs=1e-12)


def test_anglepair_rejects_closed_interval_boundary():
    AnglePair(1.5, -1.5)
    with pytest.raises(ValueError):
        AnglePair(np.pi / 2, 0.0)


def test_array_spec_validation():
    with pytest.raises(ValueError):
        ArraySpec(origin=[0.0, 0.0], boresight=[0.0, 2.0], num_elements=4)
    with pytest.raises(ValueError):
        ArraySpec(origin=[0.0, 0.0], boresight=[0.0, 1.0], num_elements=0)


def test_scene_validation():
    pair = make_pair(TX_LEFT)
    with pytest.raises(ValueError):
        Scene(pairs=(pair,), targets=np.array([[0.0, -5.0]]))  # behind
    with pytest.raises(ValueError):
        Scene(pairs=(), targets=np.array([[0.0, 5.0]]))
    dup = RadarPairGeometry(stx=ula(TX_LEFT), srx=ula(RX_SHARED), id=0)
    with pytest.raises(ValueError):
        Scene(pairs=(pair, dup), targets=np.array([[0.0, 5.0]]))
    scene = Scene(pairs=(pair,), targets=np.array([[0.0, 5.0], [1.0, 6.0]]))
    assert scene.num_targets == 2 and scene.num_pairs == 1
