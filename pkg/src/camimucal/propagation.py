"""IMU-driven propagation of the calibration state and its error covariance.

Mean propagation integrates the bias-corrected IMU sample in closed form
over one step (exact for constant body rate and constant global
acceleration).  Covariance propagation uses the linearized continuous-time
error dynamics with a second-order transition matrix.

The attitude error lives in the right-composition tangent (q <- q ⊗
exp_map(dtheta)), so the attitude rows of F differ from the familiar
body-frame-error form: the attitude error is constant under body rotation
and couples to the gyro bias through R(q_IG)^T.  The finite-difference
transition test pins this choice.
"""

from dataclasses import dataclass

import numpy as np

from .so3 import exp_map, quat_multiply, quat_to_rotmat, skew
from .state import ATT, BA, BG, IMU_DIM, POS, VEL, FilterState, ImuState

MAX_STEP = 0.1  # seconds; longer gaps must be split by the caller


@dataclass
class ImuSample:
    """One IMU record: sensor-clock timestamp, angular rate, specific force."""

    t_s: float
    w_m: np.ndarray
    a_m: np.ndarray

    def __post_init__(self):
        self.w_m = np.asarray(self.w_m, dtype=float)
        self.a_m = np.asarray(self.a_m, dtype=float)
        if not (np.isfinite(self.t_s) and np.all(np.isfinite(self.w_m))
                and np.all(np.isfinite(self.a_m))):
            raise ValueError("ImuSample has non-finite components")


def propagate_mean(x, u, dt, gravity):
    """Propagate the mean state by one IMU step.

    Attitude integrates the constant-rate closed form q_IG <- exp_map(-w dt)
    ⊗ q_IG; velocity and position use the midpoint rule with the
    acceleration rotated at the old attitude.  Biases and camera extrinsics
    are returned unchanged (same arrays).
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    if dt > MAX_STEP:
        raise ValueError(f"dt = {dt} exceeds {MAX_STEP} s; split the gap")
    w_hat = u.w_m - x.imu.b_g
    a_hat = u.a_m - x.imu.b_a
    a_G = quat_to_rotmat(x.imu.q_IG).T @ a_hat + gravity
    imu = ImuState(
        q_IG=quat_multiply(exp_map(-w_hat * dt), x.imu.q_IG),
        b_g=x.imu.b_g,
        v_GI=x.imu.v_GI + a_G * dt,
        b_a=x.imu.b_a,
        p_GI=x.imu.p_GI + x.imu.v_GI * dt + 0.5 * a_G * dt * dt,
    )
    return FilterState(imu, x.cameras)


def compute_F(x, w_hat, a_hat):
    """Continuous-time error-state transition matrix.

    Nonzero blocks: attitude error driven by gyro bias through R_IG^T,
    velocity error coupled to attitude through skew(R_IG^T a_hat) and to
    accel bias through -R_IG^T, position error driven by velocity.  Camera
    rows and columns are identically zero.
    """
    dim = x.error_dim
    R_IG_T = quat_to_rotmat(x.imu.q_IG).T
    F = np.zeros((dim, dim))
    F[ATT, BG] = R_IG_T
    F[VEL, ATT] = skew(R_IG_T @ np.asarray(a_hat, dtype=float))
    F[VEL, BA] = -R_IG_T
    F[POS, VEL] = np.eye(3)
    return F


def compute_G(x):
    """Noise input matrix for n = [n_g, n_wg, n_a, n_wa].

    The attitude noise block is -I; under the isotropic gyro density this
    yields the same G Qc G^T as the frame-consistent R_IG^T block.  The
    position row is zero: position error is driven through velocity only.
    """
    dim = x.error_dim
    G = np.zeros((dim, 12))
    G[ATT, 0:3] = -np.eye(3)
    G[BG, 3:6] = np.eye(3)
    G[VEL, 6:9] = -quat_to_rotmat(x.imu.q_IG).T
    G[BA, 9:12] = np.eye(3)
    return G


def noise_density_matrix(noise):
    """Continuous-time noise density Qc = diag(sg^2 I, swg^2 I, sa^2 I, swa^2 I)."""
    return np.diag([noise.sigma_g ** 2] * 3 + [noise.sigma_wg ** 2] * 3
                   + [noise.sigma_a ** 2] * 3 + [noise.sigma_wa ** 2] * 3)


def propagate_covariance(P, F, G, noise, dt):
    """One covariance step: P <- Phi P Phi^T + Phi G Qc G^T Phi^T dt, with
    Phi = I + F dt + F^2 dt^2 / 2; output resymmetrized."""
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    dim = P.shape[0]
    Phi = np.eye(dim) + F * dt + 0.5 * (F @ F) * dt * dt
    Qc = noise_density_matrix(noise)
    GQG = G @ Qc @ G.T
    P_new = Phi @ (P + GQG * dt) @ Phi.T
    return 0.5 * (P_new + P_new.T)


def propagate(x, P, u, dt, noise, gravity):
    """Mean + covariance propagation over dt, splitting steps longer than
    MAX_STEP into sub-steps of at most 10 ms."""
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    if dt > MAX_STEP:
        n_sub = int(np.ceil(dt / 0.01))
        sub = dt / n_sub
        for _ in range(n_sub):
            x, P = propagate(x, P, u, sub, noise, gravity)
        return x, P
    w_hat = u.w_m - x.imu.b_g
    a_hat = u.a_m - x.imu.b_a
    x_new = propagate_mean(x, u, dt, gravity)
    F = compute_F(x, w_hat, a_hat)
    G = compute_G(x)
    P_new = propagate_covariance(P, F, G, noise, dt)
    return x_new, P_new
