"""Kalman measurement update with Mahalanobis gating and Joseph-form covariance.

The innovation covariance is factorized (Cholesky), never inverted
explicitly; an update whose chi-square statistic exceeds the configured
gate threshold leaves state and covariance untouched.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.stats import chi2

from .state import state_compose

COND_WARN = 1e12


class InnovationError(RuntimeError):
    """Raised when the innovation covariance cannot be factorized."""


def chi2_threshold(confidence, dof):
    """Inverse chi-square CDF; the gate threshold for a given confidence."""
    if not 0.0 < confidence < 1.0:
        raise ValueError(f"confidence must be in (0, 1), got {confidence}")
    if dof < 1:
        raise ValueError(f"dof must be >= 1, got {dof}")
    return float(chi2.ppf(confidence, dof))


@dataclass
class GateConfig:
    """Mahalanobis gate: chi-square confidence level and residual dimension."""

    confidence: float = 0.95
    dof: int = 6

    @property
    def threshold(self):
        return chi2_threshold(self.confidence, self.dof)


@dataclass
class UpdateResult:
    state: object
    covariance: np.ndarray
    accepted: bool
    chi2: float


def gain_and_joseph(P, H, R, y):
    """Core update algebra on plain arrays.

    Returns (dx, P_new, chi2) for gain K = P H^T S^-1 and the Joseph-form
    covariance (I - KH) P (I - KH)^T + K R K^T, resymmetrized.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    S = H @ P @ H.T + R
    S = 0.5 * (S + S.T)
    try:
        factor = cho_factor(S, lower=True)
    except np.linalg.LinAlgError as exc:
        raise InnovationError("innovation covariance is not positive definite") from exc
    if np.linalg.cond(S) > COND_WARN:
        warnings.warn(f"innovation covariance condition number exceeds {COND_WARN:.0e}",
                      RuntimeWarning)
    chi2_val = float(y @ cho_solve(factor, y))
    K = cho_solve(factor, H @ P).T
    dx = K @ y
    A = np.eye(P.shape[0]) - K @ H
    P_new = A @ P @ A.T + K @ R @ K.T
    return dx, 0.5 * (P_new + P_new.T), chi2_val


def kalman_update(x, P, y, H, R_meas, gate=None, context=""):
    """Gated Kalman update of a FilterState.

    If chi2 = y^T S^-1 y passes the gate, the error correction K y is
    composed onto the state and the covariance takes the Joseph form;
    otherwise the original state and covariance are returned unchanged with
    accepted=False.
    """
    gate = gate or GateConfig()
    try:
        dx, P_new, chi2_val = gain_and_joseph(P, H, R_meas, y)
    except InnovationError as exc:
        raise InnovationError(f"{exc}{' for ' + context if context else ''}") from exc
    if chi2_val > gate.threshold:
        return UpdateResult(state=x, covariance=P, accepted=False, chi2=chi2_val)
    return UpdateResult(state=state_compose(x, dx), covariance=P_new,
                        accepted=True, chi2=chi2_val)
