"""Board-pose measurement model: prediction, residual, and Jacobian.

Each camera observes the full 6-DoF pose of the fiducial board in its own
frame.  The residual is formed on the rotation manifold,

    y = [ z_p - zhat_p,  log_map(zhat_q^-1 ⊗ z_q) ]

and the measurement matrix is the exact Jacobian of that residual with
respect to the error state of the camera producing the measurement,
evaluated at the current estimate.  Under the right-composition error
convention the rotation rows are exactly linear in the attitude errors, so
they reduce to rotation matrices; the finite-difference test in
tests/test_measurement.py pins every sign and also records the rejected
alternative (a transposed variant with an SO(3)-Jacobian factor).
"""

from dataclasses import dataclass, field

import numpy as np

from .so3 import log_map, quat_inverse, quat_multiply, quat_normalize, quat_to_rotmat, skew
from .state import ATT, POS, cam_att_slice, cam_pos_slice


def default_measurement_covariance():
    """Fallback 6x6 board-pose covariance for detectors that report none.

    Depth (camera z) and the in-plane-normal rotation are noisier for planar
    fiducials than the lateral directions.
    """
    return np.diag([
        0.005 ** 2, 0.005 ** 2, 0.010 ** 2,
        np.deg2rad(0.5) ** 2, np.deg2rad(0.5) ** 2, np.deg2rad(1.0) ** 2,
    ])


@dataclass
class CameraPoseMeasurement:
    """Board pose in one camera frame: position p_CB, orientation q_CB
    (board frame expressed in camera frame), sensor-clock timestamp, and a
    6x6 covariance (position m^2, rotation rad^2)."""

    cam_index: int
    t_s: float
    p_CB: np.ndarray
    q_CB: np.ndarray
    R_meas: np.ndarray = field(default_factory=default_measurement_covariance)

    def __post_init__(self):
        self.p_CB = np.asarray(self.p_CB, dtype=float)
        self.q_CB = quat_normalize(self.q_CB)
        self.R_meas = np.asarray(self.R_meas, dtype=float)
        if self.R_meas.shape != (6, 6):
            raise ValueError("R_meas must be 6x6")
        if np.abs(self.R_meas - self.R_meas.T).max() > 1e-12:
            raise ValueError("R_meas must be symmetric")
        if np.any(np.linalg.eigvalsh(self.R_meas) <= 0.0):
            raise ValueError("R_meas must be positive definite")


@dataclass
class PredictedMeasurement:
    """Predicted board pose in a camera frame."""

    p_CB: np.ndarray
    q_CB: np.ndarray


def predict_measurement(x, cam_index, world):
    """Predicted board pose for one camera:

        zhat_p = R(q_IC)^T [ R(q_IG) (p_GB - p_GI) - p_IC ]
        zhat_q = q_IC^-1 ⊗ q_IG ⊗ q_GB
    """
    if not 0 <= cam_index < x.num_cameras:
        raise IndexError(f"cam_index {cam_index} out of range [0, {x.num_cameras})")
    cam = x.cameras[cam_index]
    R_IC = quat_to_rotmat(cam.q_IC)
    R_IG = quat_to_rotmat(x.imu.q_IG)
    p = R_IC.T @ (R_IG @ (world.p_GB - x.imu.p_GI) - cam.p_IC)
    q = quat_multiply(quat_inverse(cam.q_IC), quat_multiply(x.imu.q_IG, world.q_GB))
    return PredictedMeasurement(p_CB=p, q_CB=q)


def compute_residual(z, zhat):
    """6-vector residual: position difference and the local rotation vector
    log_map(zhat_q^-1 ⊗ z_q)."""
    rot = log_map(quat_multiply(quat_inverse(zhat.q_CB), z.q_CB))
    return np.concatenate([z.p_CB - zhat.p_CB, rot])


def compute_H(x, cam_index, world):
    """6 x (15+6N) measurement matrix for one camera.

    Position rows couple to the IMU attitude and position and to the
    camera's own extrinsic blocks; rotation rows couple only to the two
    attitude blocks.  All other columns (biases, velocity, other cameras)
    are zero.
    """
    if not 0 <= cam_index < x.num_cameras:
        raise IndexError(f"cam_index {cam_index} out of range [0, {x.num_cameras})")
    cam = x.cameras[cam_index]
    R_IC = quat_to_rotmat(cam.q_IC)
    R_IG = quat_to_rotmat(x.imu.q_IG)
    R_GB = quat_to_rotmat(world.q_GB)
    board_rel = world.p_GB - x.imu.p_GI
    zhat_p = R_IC.T @ (R_IG @ board_rel - cam.p_IC)

    H = np.zeros((6, x.error_dim))
    H[0:3, ATT] = -R_IC.T @ R_IG @ skew(board_rel)
    H[0:3, POS] = -R_IC.T @ R_IG
    H[0:3, cam_att_slice(cam_index)] = skew(zhat_p)
    H[0:3, cam_pos_slice(cam_index)] = -R_IC.T
    H[3:6, ATT] = R_GB.T
    H[3:6, cam_att_slice(cam_index)] = -(R_IC.T @ R_IG @ R_GB).T
    return H
