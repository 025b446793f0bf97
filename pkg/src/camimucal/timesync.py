"""One-way sensor clock translation.

A two-parameter Kalman filter per sensor estimates the affine mapping

    t_c = alpha * t_s + beta

from sensor-clock timestamps t_s to host-clock arrival timestamps t_c.
Each update costs a handful of scalar operations (2x2 algebra), so the
filter runs comfortably at IMU rates.  It lives entirely outside the
calibration filter: translated timestamps feed the calibration filter's
event ordering, never the other way around.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

ALPHA_MIN, ALPHA_MAX = 0.5, 2.0


@dataclass
class TimeTranslationState:
    """Clock skew alpha, offset beta (seconds), their 2x2 covariance, the
    process/measurement noise configuration, and stream bookkeeping."""

    alpha: float = 1.0
    beta: float = 0.0
    P: np.ndarray = field(default_factory=lambda: np.diag([1e-6, 1e-4]))
    q_alpha: float = 1e-12   # skew random-walk density, 1/s
    q_beta: float = 1e-9     # offset random-walk density, s^2/s
    r_var: float = 1e-6      # arrival jitter variance, s^2 (1 ms)^2
    last_t_s: float = None
    dropped: int = 0
    fault: bool = False

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=float)


def init_time_filter(t_s0, t_c0, *, alpha_var=1e-6, beta_var=1e-4,
                     q_alpha=1e-12, q_beta=1e-9, r_var=1e-6):
    """Start a translation filter from the first (sensor, host) time pair:
    alpha = 1, beta = t_c0 - t_s0."""
    return TimeTranslationState(
        alpha=1.0, beta=t_c0 - t_s0, P=np.diag([alpha_var, beta_var]),
        q_alpha=q_alpha, q_beta=q_beta, r_var=r_var, last_t_s=t_s0)


def update_time_filter(state, t_s, t_c_arrival):
    """Process one timestamp pair.

    Non-monotonic sensor times are dropped and counted.  The measurement is
    the host arrival time with model alpha * t_s + beta and observation
    row [t_s, 1]; random-walk process noise accrues per elapsed sensor time.
    """
    if state.last_t_s is not None and t_s < state.last_t_s:
        state.dropped += 1
        return state
    dt = 0.0 if state.last_t_s is None else t_s - state.last_t_s
    state.last_t_s = t_s

    P = state.P + np.diag([state.q_alpha, state.q_beta]) * dt
    h = np.array([t_s, 1.0])
    y = t_c_arrival - (state.alpha * t_s + state.beta)
    S = h @ P @ h + state.r_var
    K = (P @ h) / S
    state.alpha += K[0] * y
    state.beta += K[1] * y
    A = np.eye(2) - np.outer(K, h)
    P = A @ P @ A.T + np.outer(K, K) * state.r_var
    state.P = 0.5 * (P + P.T)

    if not ALPHA_MIN < state.alpha < ALPHA_MAX:
        if not state.fault:
            warnings.warn(f"clock skew estimate {state.alpha:.4f} outside "
                          f"({ALPHA_MIN}, {ALPHA_MAX}); flagging fault", RuntimeWarning)
        state.fault = True
    return state


def translate(state, t_s):
    """Map a sensor timestamp to the host clock: alpha * t_s + beta."""
    return state.alpha * t_s + state.beta
