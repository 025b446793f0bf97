"""Rotation kernel tests: golden values, oracle comparisons, invariants."""

import numpy as np
import pytest

from camimucal.so3 import (
    JAC_SERIES_ANGLE,
    exp_map,
    inverse_right_jacobian,
    log_map,
    quat_identity,
    quat_inverse,
    quat_multiply,
    quat_normalize,
    quat_to_rotmat,
    right_jacobian,
    rotvec_wrap,
    skew,
)

rng = np.random.default_rng(42)


def random_quat():
    return quat_normalize(rng.standard_normal(4))


def random_rotvec(max_angle=np.pi - 1e-3):
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    return axis * rng.uniform(0.0, max_angle)


def rodrigues(axis, angle):
    """Independent axis-angle rotation matrix (Rodrigues formula)."""
    axis = np.asarray(axis, dtype=float) / np.linalg.norm(axis)
    K = skew(axis)
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def test_multiply_identity():
    q = random_quat()
    assert np.allclose(quat_multiply(quat_identity(), q), q, atol=1e-15)
    assert np.allclose(quat_multiply(q, quat_identity()), q, atol=1e-15)


def test_multiply_two_quarter_turns_is_half_turn():
    qz90 = exp_map([0.0, 0.0, np.pi / 2])
    qz180 = quat_multiply(qz90, qz90)
    assert np.abs(quat_to_rotmat(qz180) - rodrigues([0, 0, 1], np.pi)).max() < 1e-12


def test_multiply_matches_rotation_matrix_product():
    for _ in range(300):
        a, b = random_quat(), random_quat()
        R_ab = quat_to_rotmat(quat_multiply(a, b))
        assert np.abs(R_ab - quat_to_rotmat(a) @ quat_to_rotmat(b)).max() < 1e-12


def test_inverse():
    assert np.allclose(quat_inverse(quat_identity()), quat_identity())
    th = random_rotvec()
    assert np.allclose(quat_inverse(exp_map(th)), exp_map(-th), atol=1e-15)
    for _ in range(100):
        q = random_quat()
        assert np.allclose(quat_multiply(q, quat_inverse(q)), quat_identity(), atol=1e-14)
        assert np.abs(quat_to_rotmat(quat_inverse(q)) - quat_to_rotmat(q).T).max() < 1e-12


def test_rotmat_identity_and_golden_quarter_turn():
    assert np.allclose(quat_to_rotmat(quat_identity()), np.eye(3))
    # active rotation reading: 90 deg about z sends x to y
    qz90 = exp_map([0.0, 0.0, np.pi / 2])
    assert np.allclose(quat_to_rotmat(qz90) @ [1, 0, 0], [0, 1, 0], atol=1e-12)
    # axis-angle oracle on random rotations
    for _ in range(100):
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        angle = rng.uniform(-np.pi, np.pi)
        assert np.abs(quat_to_rotmat(exp_map(axis * angle))
                      - rodrigues(axis, angle)).max() < 1e-12


def test_rotmat_orthonormal():
    for _ in range(100):
        R = quat_to_rotmat(random_quat())
        assert np.linalg.norm(R.T @ R - np.eye(3)) < 1e-12
        assert abs(np.linalg.det(R) - 1.0) < 1e-12


def test_double_cover():
    q = random_quat()
    assert np.abs(quat_to_rotmat(q) - quat_to_rotmat(-q)).max() < 1e-14


def test_skew_basics():
    assert np.allclose(skew([0, 0, 0]), np.zeros((3, 3)))
    assert np.allclose(skew([0, 0, 1]) @ [1, 0, 0], [0, 1, 0])
    for _ in range(100):
        a, b = rng.standard_normal(3), rng.standard_normal(3)
        assert np.abs(skew(a) @ b - np.cross(a, b)).max() < 1e-15
        assert np.array_equal(skew(a) + skew(a).T, np.zeros((3, 3)))


def test_exp_map_golden():
    assert np.allclose(exp_map([0, 0, 0]), quat_identity())
    q = exp_map([0.0, 0.0, np.pi / 2])
    assert np.allclose(q, [np.cos(np.pi / 4), 0, 0, np.sin(np.pi / 4)], atol=1e-15)


def test_log_map_golden():
    assert np.allclose(log_map(quat_identity()), np.zeros(3))
    qy90 = np.array([np.cos(np.pi / 4), 0.0, np.sin(np.pi / 4), 0.0])
    assert np.allclose(log_map(qy90), [0.0, np.pi / 2, 0.0], atol=1e-15)


def test_exp_log_round_trip():
    for _ in range(500):
        th = random_rotvec(np.pi - 1e-3)
        assert np.linalg.norm(log_map(exp_map(th)) - th) < 1e-10
    for _ in range(100):
        q = random_quat()
        q2 = exp_map(log_map(q))
        assert min(np.linalg.norm(q2 - q), np.linalg.norm(q2 + q)) < 1e-12


def test_log_map_small_angles():
    for scale in (1e-12, 1e-9, 1e-8, 1e-6, 1e-4):
        th = np.array([1.0, -2.0, 0.5]) / np.linalg.norm([1.0, -2.0, 0.5]) * scale
        assert np.linalg.norm(log_map(exp_map(th)) - th) < 1e-16 + 1e-10 * scale


def test_log_map_half_turn_tie_break():
    # exact w = 0: axis sign fixed by the largest-magnitude vector component
    q = np.array([0.0, 0.0, -1.0, 0.0])
    th = log_map(q)
    assert np.allclose(th, [0.0, np.pi, 0.0])
    assert abs(np.linalg.norm(th) - np.pi) < 1e-15


def test_rotvec_wrap():
    th = np.array([0.1, 0.2, -0.3])
    assert np.allclose(rotvec_wrap(th), th)
    axis = np.array([1.0, 0.0, 0.0])
    wrapped = rotvec_wrap(axis * (2 * np.pi - 0.5))
    assert np.allclose(wrapped, -axis * 0.5, atol=1e-12)
    assert np.linalg.norm(rotvec_wrap(axis * 2 * np.pi)) < 1e-12


def jr_series(theta, n_terms=30):
    """Right Jacobian by its matrix power series sum_k (-skew)^k / (k+1)!."""
    import math

    S = -skew(theta)
    term = np.eye(3)
    total = np.zeros((3, 3))
    for k in range(n_terms):
        total += term / math.factorial(k + 1)
        term = term @ S
    return total


def test_inverse_right_jacobian_golden():
    assert np.allclose(inverse_right_jacobian([0, 0, 0]), np.eye(3))


def coef_of_skew_squared(a):
    """Extract the skew^2 coefficient of the inverse right Jacobian at angle a."""
    th = np.array([a, 0.0, 0.0])
    J = inverse_right_jacobian(th)
    return (J - np.eye(3) - 0.5 * skew(th))[1, 1] / (-a * a)


def test_inverse_right_jacobian_small_angle_coefficient():
    # the skew^2 coefficient tends to 1/12; verified against a 50-digit
    # evaluation of the closed form where available
    assert abs(coef_of_skew_squared(1e-3) - 1.0 / 12.0) < 1e-8
    mp = pytest.importorskip("mpmath")
    mp.mp.dps = 50
    # extraction of the coefficient from the matrix is only conditioned for
    # a^2 >> eps; the series branch is covered by the switch-point test
    for a in (2e-2, 0.3, 1.0):
        am = mp.mpf(a)
        exact = float(1 / am ** 2 - (1 + mp.cos(am)) / (2 * am * mp.sin(am)))
        assert abs(coef_of_skew_squared(a) - exact) < 1e-12


def test_inverse_right_jacobian_times_jr_is_identity():
    for _ in range(200):
        axis = rng.standard_normal(3)
        th = axis / np.linalg.norm(axis) * 1.0
        prod = inverse_right_jacobian(th) @ jr_series(th)
        assert np.abs(prod - np.eye(3)).max() < 1e-9
    for _ in range(200):
        th = random_rotvec(np.pi - 1e-2)
        prod = inverse_right_jacobian(th) @ jr_series(th)
        assert np.abs(prod - np.eye(3)).max() < 1e-9


def test_right_jacobian_matches_series_oracle():
    for _ in range(200):
        th = random_rotvec(np.pi)
        assert np.abs(right_jacobian(th) - jr_series(th)).max() < 1e-12
    for scale in (1e-10, 1e-6, 1e-3, 5e-3):
        th = np.array([0.3, -0.4, 0.5]) * scale
        assert np.abs(right_jacobian(th) - jr_series(th)).max() < 1e-14


def test_inverse_right_jacobian_domain_error_near_pi():
    with pytest.raises(ValueError):
        inverse_right_jacobian([np.pi, 0.0, 0.0])
    with pytest.raises(ValueError):
        inverse_right_jacobian([np.pi - 1e-7, 0.0, 0.0])


def test_jacobian_correction_term_is_symmetric():
    for _ in range(50):
        th = random_rotvec(np.pi - 1e-2)
        M = inverse_right_jacobian(th) - np.eye(3) - 0.5 * skew(th)
        assert np.abs(M - M.T).max() < 1e-12


def test_jacobian_coefficient_smooth_at_series_switch():
    def coef(fn, a):
        th = np.array([a, 0.0, 0.0])
        return (fn(th) - np.eye(3) - 0.5 * skew(th))[1, 1] / (-a * a)

    below = coef(inverse_right_jacobian, JAC_SERIES_ANGLE * (1 - 1e-9))
    above = coef(inverse_right_jacobian, JAC_SERIES_ANGLE * (1 + 1e-9))
    assert abs(below - above) / abs(below) < 1e-9


def test_series_matches_high_precision_closed_form_at_switch():
    mp = pytest.importorskip("mpmath")
    mp.mp.dps = 50
    a = mp.mpf(JAC_SERIES_ANGLE) * (1 - mp.mpf("1e-12"))
    exact = float(1 / a ** 2 - (1 + mp.cos(a)) / (2 * a * mp.sin(a)))
    af = JAC_SERIES_ANGLE * (1 - 1e-12)
    series = 1.0 / 12.0 + af ** 2 / 720.0 + af ** 4 / 30240.0
    assert abs(series - exact) < 1e-12
