"""Filter state tests: composition, indexing, IMU pose initialization."""

import numpy as np
import pytest

from camimucal.measurement import CameraPoseMeasurement, compute_residual, predict_measurement
from camimucal.so3 import exp_map, quat_identity, quat_multiply, quat_normalize, quat_to_rotmat
from camimucal.state import (
    CameraExtrinsicState,
    FilterState,
    ImuNoiseParams,
    ImuState,
    WorldModel,
    cam_att_slice,
    cam_pos_slice,
    initial_covariance,
    initialize_imu_pose,
    state_compose,
    state_difference,
)

rng = np.random.default_rng(11)


def random_quat():
    return quat_normalize(rng.standard_normal(4))


def random_state(n_cameras=2):
    imu = ImuState(q_IG=random_quat(), b_g=0.01 * rng.standard_normal(3),
                   v_GI=rng.standard_normal(3), b_a=0.1 * rng.standard_normal(3),
                   p_GI=rng.standard_normal(3))
    cams = [CameraExtrinsicState(q_IC=random_quat(), p_IC=rng.standard_normal(3))
            for _ in range(n_cameras)]
    return FilterState(imu, cams)


def random_world():
    return WorldModel(p_GB=rng.standard_normal(3), q_GB=random_quat())


def test_error_dim():
    assert random_state(1).error_dim == 21
    assert random_state(3).error_dim == 33


def test_requires_at_least_one_camera():
    with pytest.raises(ValueError):
        FilterState(ImuState(), [])


def test_compose_zero_is_identity():
    x = random_state()
    x2 = state_compose(x, np.zeros(x.error_dim))
    assert np.array_equal(x2.imu.b_g, x.imu.b_g)
    assert np.array_equal(x2.imu.v_GI, x.imu.v_GI)
    assert np.array_equal(x2.imu.b_a, x.imu.b_a)
    assert np.array_equal(x2.imu.p_GI, x.imu.p_GI)
    for c2, c in zip(x2.cameras, x.cameras):
        assert np.array_equal(c2.p_IC, c.p_IC)
    assert np.abs(x2.imu.q_IG - x.imu.q_IG).max() < 1e-15


def test_compose_position_block_only():
    x = random_state()
    dx = np.zeros(x.error_dim)
    dx[12:15] = [1.0, 2.0, 3.0]
    x2 = state_compose(x, dx)
    assert np.allclose(x2.imu.p_GI, x.imu.p_GI + [1, 2, 3])
    assert np.array_equal(x2.imu.v_GI, x.imu.v_GI)
    assert np.abs(x2.imu.q_IG - x.imu.q_IG).max() < 1e-15
    for c2, c in zip(x2.cameras, x.cameras):
        assert np.array_equal(c2.p_IC, c.p_IC)


def test_compose_attitude_is_right_multiplication():
    x = random_state()
    eps = 1e-3
    dx = np.zeros(x.error_dim)
    dx[0:3] = [0.0, 0.0, eps]
    x2 = state_compose(x, dx)
    expected = quat_to_rotmat(x.imu.q_IG) @ quat_to_rotmat(exp_map([0, 0, eps]))
    assert np.abs(quat_to_rotmat(x2.imu.q_IG) - expected).max() < 1e-12


def test_compose_camera_blocks():
    x = random_state(3)
    dx = np.zeros(x.error_dim)
    dx[cam_att_slice(1)] = [0.01, -0.02, 0.03]
    dx[cam_pos_slice(1)] = [0.1, 0.2, 0.3]
    x2 = state_compose(x, dx)
    assert np.abs(x2.cameras[0].q_IC - x.cameras[0].q_IC).max() < 1e-15
    assert np.array_equal(x2.cameras[2].p_IC, x.cameras[2].p_IC)
    assert np.allclose(x2.cameras[1].p_IC, x.cameras[1].p_IC + [0.1, 0.2, 0.3])
    expected = quat_multiply(x.cameras[1].q_IC, exp_map([0.01, -0.02, 0.03]))
    assert np.abs(x2.cameras[1].q_IC - expected).max() < 1e-15


def test_compose_dimension_mismatch():
    with pytest.raises(ValueError):
        state_compose(random_state(2), np.zeros(21))


def test_difference_inverts_compose():
    for _ in range(50):
        x = random_state(2)
        dx = 0.1 * rng.standard_normal(x.error_dim)
        assert np.abs(state_difference(state_compose(x, dx), x) - dx).max() < 1e-12


def test_initial_covariance_defaults():
    P = initial_covariance(2)
    assert P.shape == (27, 27)
    assert np.allclose(np.diag(P)[0:3], 0.1)
    assert np.allclose(np.diag(P)[3:6], 1e-4)
    assert np.allclose(np.diag(P)[15:18], 0.04)
    assert np.abs(P - P.T).max() == 0.0


def test_noise_params_validation():
    with pytest.raises(ValueError):
        ImuNoiseParams(sigma_g=0.0)


def test_world_gravity_bounds():
    with pytest.raises(ValueError):
        WorldModel(gravity=[0.0, 0.0, -12.0])
    WorldModel(gravity=[0.0, 0.0, -12.0], allow_nonstandard_gravity=True)


def test_initialize_pure_inversion_case():
    # identity rotations, board 1 m in front of a camera at the IMU origin
    guess = CameraExtrinsicState()
    world = WorldModel()
    meas = CameraPoseMeasurement(cam_index=0, t_s=0.0, p_CB=[0.0, 0.0, 1.0],
                                 q_CB=quat_identity())
    imu = initialize_imu_pose(guess, world, meas)
    assert np.allclose(imu.q_IG, quat_identity())
    assert np.allclose(imu.p_GI, [0.0, 0.0, -1.0])
    assert np.array_equal(imu.v_GI, np.zeros(3))
    assert np.array_equal(imu.b_g, np.zeros(3))


def test_initialize_round_trip_consistency():
    # the defining property: predicting the initializing measurement from the
    # initialized pose reproduces it exactly
    for _ in range(1000):
        world = random_world()
        guess = CameraExtrinsicState(q_IC=random_quat(), p_IC=rng.standard_normal(3))
        meas = CameraPoseMeasurement(cam_index=0, t_s=0.0,
                                     p_CB=rng.standard_normal(3), q_CB=random_quat())
        imu = initialize_imu_pose(guess, world, meas)
        x = FilterState(imu, [guess])
        y = compute_residual(meas, predict_measurement(x, 0, world))
        assert np.linalg.norm(y[:3]) < 1e-10
        assert np.linalg.norm(y[3:]) < 1e-10
