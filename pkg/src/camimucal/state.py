"""Calibration filter state: IMU navigation state plus N camera extrinsics.

Error-state layout (dimension 15 + 6N), used by every covariance-facing
module:

    [0:3)    attitude error of q_IG          (rad)
    [3:6)    gyro bias error                 (rad/s)
    [6:9)    velocity error                  (m/s)
    [9:12)   accel bias error                (m/s^2)
    [12:15)  position error                  (m)
    then per camera i:
    [15+6i : 18+6i)  attitude error of q_IC_i  (rad)
    [18+6i : 21+6i)  position error of p_IC_i  (m)

Quaternion errors compose on the right: q <- q ⊗ exp_map(dtheta).  Every
Jacobian in this package is pinned to that convention by finite-difference
tests.
"""

from dataclasses import dataclass, field

import numpy as np

from .so3 import (
    exp_map,
    log_map,
    quat_identity,
    quat_inverse,
    quat_multiply,
    quat_normalize,
    quat_to_rotmat,
)

IMU_DIM = 15
CAM_DIM = 6

ATT = slice(0, 3)
BG = slice(3, 6)
VEL = slice(6, 9)
BA = slice(9, 12)
POS = slice(12, 15)


def cam_att_slice(i):
    return slice(IMU_DIM + CAM_DIM * i, IMU_DIM + CAM_DIM * i + 3)


def cam_pos_slice(i):
    return slice(IMU_DIM + CAM_DIM * i + 3, IMU_DIM + CAM_DIM * i + 6)


def error_dim(n_cameras):
    return IMU_DIM + CAM_DIM * n_cameras


@dataclass
class ImuState:
    """IMU navigation state: attitude q_IG (global expressed in IMU frame),
    gyro bias, velocity and position in the global frame, accel bias."""

    q_IG: np.ndarray = field(default_factory=quat_identity)
    b_g: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v_GI: np.ndarray = field(default_factory=lambda: np.zeros(3))
    b_a: np.ndarray = field(default_factory=lambda: np.zeros(3))
    p_GI: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.q_IG = quat_normalize(self.q_IG)
        self.b_g = np.asarray(self.b_g, dtype=float)
        self.v_GI = np.asarray(self.v_GI, dtype=float)
        self.b_a = np.asarray(self.b_a, dtype=float)
        self.p_GI = np.asarray(self.p_GI, dtype=float)

    def copy(self):
        return ImuState(self.q_IG.copy(), self.b_g.copy(), self.v_GI.copy(),
                        self.b_a.copy(), self.p_GI.copy())


@dataclass
class CameraExtrinsicState:
    """Camera extrinsics: q_IC (camera frame expressed in IMU frame) and
    camera position p_IC in the IMU frame."""

    q_IC: np.ndarray = field(default_factory=quat_identity)
    p_IC: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.q_IC = quat_normalize(self.q_IC)
        self.p_IC = np.asarray(self.p_IC, dtype=float)

    def copy(self):
        return CameraExtrinsicState(self.q_IC.copy(), self.p_IC.copy())


@dataclass
class FilterState:
    """Full calibration state: one IMU state plus N >= 1 camera states."""

    imu: ImuState
    cameras: list

    def __post_init__(self):
        if len(self.cameras) < 1:
            raise ValueError("FilterState requires at least one camera")

    @property
    def num_cameras(self):
        return len(self.cameras)

    @property
    def error_dim(self):
        return error_dim(len(self.cameras))

    def copy(self):
        return FilterState(self.imu.copy(), [c.copy() for c in self.cameras])


@dataclass
class WorldModel:
    """Fixed world constants: gravity and the fiducial board pose (board
    frame expressed in the global frame)."""

    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))
    p_GB: np.ndarray = field(default_factory=lambda: np.zeros(3))
    q_GB: np.ndarray = field(default_factory=quat_identity)
    allow_nonstandard_gravity: bool = False

    def __post_init__(self):
        self.gravity = np.asarray(self.gravity, dtype=float)
        self.p_GB = np.asarray(self.p_GB, dtype=float)
        self.q_GB = quat_normalize(self.q_GB)
        g = np.linalg.norm(self.gravity)
        if not self.allow_nonstandard_gravity and not (9.7 <= g <= 9.9):
            raise ValueError(
                f"|gravity| = {g:.4f} outside [9.7, 9.9] m/s^2; "
                "set allow_nonstandard_gravity to override")


@dataclass
class ImuNoiseParams:
    """Continuous-time IMU noise densities (white noise and bias random walk)."""

    sigma_g: float = 1e-3    # rad/s/sqrt(Hz)
    sigma_wg: float = 1e-5   # rad/s^2/sqrt(Hz)
    sigma_a: float = 1e-2    # m/s^2/sqrt(Hz)
    sigma_wa: float = 1e-4   # m/s^3/sqrt(Hz)

    def __post_init__(self):
        for name in ("sigma_g", "sigma_wg", "sigma_a", "sigma_wa"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")


def initial_covariance(n_cameras, *, att_var=0.1, bg_var=1e-4, vel_var=1e-2,
                       ba_var=1e-2, pos_var=1e-2, cam_att_var=0.04,
                       cam_pos_var=0.04):
    """Block-diagonal initial error covariance with weakly informative defaults."""
    dim = error_dim(n_cameras)
    P = np.zeros((dim, dim))
    P[ATT, ATT] = att_var * np.eye(3)
    P[BG, BG] = bg_var * np.eye(3)
    P[VEL, VEL] = vel_var * np.eye(3)
    P[BA, BA] = ba_var * np.eye(3)
    P[POS, POS] = pos_var * np.eye(3)
    for i in range(n_cameras):
        P[cam_att_slice(i), cam_att_slice(i)] = cam_att_var * np.eye(3)
        P[cam_pos_slice(i), cam_pos_slice(i)] = cam_pos_var * np.eye(3)
    return P


def state_compose(x, dx):
    """Apply an error vector to a state: vectors add, quaternions multiply
    on the right by exp_map of their attitude error block."""
    dx = np.asarray(dx, dtype=float)
    if dx.shape != (x.error_dim,):
        raise ValueError(f"error vector has shape {dx.shape}, expected ({x.error_dim},)")
    imu = ImuState(
        q_IG=quat_multiply(x.imu.q_IG, exp_map(dx[ATT])),
        b_g=x.imu.b_g + dx[BG],
        v_GI=x.imu.v_GI + dx[VEL],
        b_a=x.imu.b_a + dx[BA],
        p_GI=x.imu.p_GI + dx[POS],
    )
    cameras = [
        CameraExtrinsicState(
            q_IC=quat_multiply(c.q_IC, exp_map(dx[cam_att_slice(i)])),
            p_IC=c.p_IC + dx[cam_pos_slice(i)],
        )
        for i, c in enumerate(x.cameras)
    ]
    return FilterState(imu, cameras)


def state_difference(xa, xb):
    """Error vector dx with xa = state_compose(xb, dx); inverse of compose."""
    if xa.num_cameras != xb.num_cameras:
        raise ValueError("states have different camera counts")
    dx = np.zeros(xa.error_dim)
    dx[ATT] = log_map(quat_multiply(quat_inverse(xb.imu.q_IG), xa.imu.q_IG))
    dx[BG] = xa.imu.b_g - xb.imu.b_g
    dx[VEL] = xa.imu.v_GI - xb.imu.v_GI
    dx[BA] = xa.imu.b_a - xb.imu.b_a
    dx[POS] = xa.imu.p_GI - xb.imu.p_GI
    for i, (ca, cb) in enumerate(zip(xa.cameras, xb.cameras)):
        dx[cam_att_slice(i)] = log_map(quat_multiply(quat_inverse(cb.q_IC), ca.q_IC))
        dx[cam_pos_slice(i)] = ca.p_IC - cb.p_IC
    return dx


def initialization_jacobians(extrinsic_guess, world, first_meas, delta=1e-6):
    """Sensitivities of the initialized IMU pose to its inputs.

    Returns (J_g, J_z), both 6x6, mapping perturbations of the extrinsic
    guess (attitude, position) and of the measurement (position, rotation,
    matching the R_meas ordering) to perturbations of the initialized
    (attitude, position).  Used to seed the pose covariance and the
    pose/extrinsic cross-covariance at initialization; a block-diagonal
    start misstates the strong coupling and makes early innovations look
    implausible.
    """
    from .measurement import CameraPoseMeasurement

    def init_pose(d_guess, d_meas):
        guess = CameraExtrinsicState(
            q_IC=quat_multiply(extrinsic_guess.q_IC, exp_map(d_guess[:3])),
            p_IC=extrinsic_guess.p_IC + d_guess[3:])
        meas = CameraPoseMeasurement(
            cam_index=first_meas.cam_index, t_s=first_meas.t_s,
            p_CB=first_meas.p_CB + d_meas[:3],
            q_CB=quat_multiply(first_meas.q_CB, exp_map(d_meas[3:])),
            R_meas=first_meas.R_meas)
        return initialize_imu_pose(guess, world, meas)

    def pose_delta(imu_a, imu_b):
        return np.concatenate([
            log_map(quat_multiply(quat_inverse(imu_b.q_IG), imu_a.q_IG)),
            imu_a.p_GI - imu_b.p_GI])

    J_g = np.zeros((6, 6))
    J_z = np.zeros((6, 6))
    zero = np.zeros(6)
    for i in range(6):
        d = np.zeros(6)
        d[i] = delta
        J_g[:, i] = pose_delta(init_pose(d, zero), init_pose(-d, zero)) / (2 * delta)
        J_z[:, i] = pose_delta(init_pose(zero, d), init_pose(zero, -d)) / (2 * delta)
    return J_g, J_z


def initialize_imu_pose(extrinsic_guess, world, first_meas):
    """IMU pose from the first board detection of one camera.

    The measured board-in-camera pose (p_CB, q_CB) is inverted to the
    camera-in-board pose, then chained through the known board pose and the
    camera's extrinsic guess:

        q_IG = (q_GB ⊗ q_BC ⊗ q_CI)^-1
        p_GI = R(q_GB) p_BC + p_GB - R(q_IG)^T p_IC

    Velocity and biases are left at zero for the caller to override.  By
    construction, predicting this camera's measurement from the returned
    pose reproduces the input exactly.
    """
    q_CB = quat_normalize(first_meas.q_CB)
    p_CB = np.asarray(first_meas.p_CB, dtype=float)
    q_BC = quat_inverse(q_CB)
    p_BC = -quat_to_rotmat(q_CB).T @ p_CB
    q_CI = quat_inverse(extrinsic_guess.q_IC)
    q_IG = quat_inverse(quat_multiply(world.q_GB, quat_multiply(q_BC, q_CI)))
    p_GI = (quat_to_rotmat(world.q_GB) @ p_BC + world.p_GB
            - quat_to_rotmat(q_IG).T @ extrinsic_guess.p_IC)
    return ImuState(q_IG=q_IG, p_GI=p_GI)
