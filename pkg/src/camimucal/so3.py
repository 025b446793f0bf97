"""Rotation kernel: unit quaternions, skew operator, exp/log maps, SO(3) Jacobians.

Conventions used by every module in this package:

* Quaternions are scalar-first ``[w, x, y, z]`` numpy arrays with Hamilton
  multiplication, so that ``quat_to_rotmat(a ⊗ b) = quat_to_rotmat(a) @
  quat_to_rotmat(b)``.
* ``quat_to_rotmat`` returns the active rotation matrix: the quaternion for
  a 90 degree turn about z maps (1,0,0) to (0,1,0).  A pose quaternion that
  "expresses frame X in frame Y" therefore has a matrix that maps X-frame
  coordinates into Y-frame coordinates.
* Rotation vectors are axis*angle, wrapped to ``|theta| <= pi``.
"""

import numpy as np

# Below this angle exp/log fall back to their second-order series.
SMALL_ANGLE = 1e-7

# Switch point between the closed form and the series for the SO(3) Jacobian
# coefficients.  At 1e-2 rad both evaluations agree to ~4e-12 relative; the
# closed form loses ~8 digits to cancellation near 1e-4 rad, so the switch
# cannot sit lower without breaking smoothness.
JAC_SERIES_ANGLE = 1e-2


def quat_identity():
    """Identity quaternion [1, 0, 0, 0]."""
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q):
    """Return q scaled to unit norm; raises on a near-zero quaternion."""
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n < 1e-12:
        raise ValueError("cannot normalize near-zero quaternion")
    return q / n


def quat_multiply(a, b):
    """Hamilton product a ⊗ b, renormalized."""
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    out = np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])
    return quat_normalize(out)


def quat_inverse(q):
    """Inverse (conjugate) of a unit quaternion."""
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_rotmat(q):
    """Active rotation matrix of a unit quaternion."""
    w, x, y, z = q
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    return np.array([
        [1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy)],
        [2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx)],
        [2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy)],
    ])


def skew(v):
    """Cross-product matrix: skew(a) @ b == cross(a, b)."""
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def exp_map(theta):
    """Rotation vector -> unit quaternion (rotation by |theta| about theta)."""
    theta = np.asarray(theta, dtype=float)
    a = np.linalg.norm(theta)
    if a < SMALL_ANGLE:
        w = 1.0 - a * a / 8.0
        xyz = (0.5 - a * a / 48.0) * theta
        return quat_normalize(np.concatenate([[w], xyz]))
    return np.concatenate([[np.cos(0.5 * a)], np.sin(0.5 * a) / a * theta])


def log_map(q):
    """Unit quaternion -> rotation vector with |theta| <= pi.

    The 180 degree case is well defined here (the vector part carries the
    axis); when w == 0 exactly the sign is fixed so the largest-magnitude
    vector component is positive.
    """
    q = np.asarray(q, dtype=float)
    w, v = q[0], q[1:]
    if w < 0.0:
        w, v = -w, -v
    elif w == 0.0:
        k = np.argmax(np.abs(v))
        if v[k] < 0.0:
            v = -v
    s = np.linalg.norm(v)
    if s < SMALL_ANGLE:
        return (2.0 / w) * (1.0 - s * s / (3.0 * w * w)) * v
    return 2.0 * np.arctan2(s, w) / s * v


def rotvec_wrap(theta):
    """Wrap a rotation vector into the canonical range |theta| <= pi."""
    theta = np.asarray(theta, dtype=float)
    a = np.linalg.norm(theta)
    if a <= np.pi:
        return theta.copy()
    a_wrapped = np.mod(a, 2.0 * np.pi)
    if a_wrapped > np.pi:
        a_wrapped -= 2.0 * np.pi
    return theta * (a_wrapped / a)


def right_jacobian(theta):
    """Classical right Jacobian Jr of SO(3) at a rotation vector."""
    theta = np.asarray(theta, dtype=float)
    a = np.linalg.norm(theta)
    s = skew(theta)
    s2 = s @ s
    if a < JAC_SERIES_ANGLE:
        a2 = a * a
        c1 = 0.5 - a2 / 24.0 + a2 * a2 / 720.0
        c2 = 1.0 / 6.0 - a2 / 120.0 + a2 * a2 / 5040.0
    else:
        c1 = (1.0 - np.cos(a)) / (a * a)
        c2 = (a - np.sin(a)) / (a ** 3)
    return np.eye(3) - c1 * s + c2 * s2


def inverse_right_jacobian(theta):
    """Closed-form inverse right Jacobian: I + skew(theta)/2 + c * skew(theta)^2.

    c = 1/|theta|^2 - (1 + cos)/(2 |theta| sin), with series
    c = 1/12 + a^2/720 + a^4/30240 below the switch angle.  Undefined as
    |theta| approaches pi, where the coefficient blows up.
    """
    theta = np.asarray(theta, dtype=float)
    a = np.linalg.norm(theta)
    if a >= np.pi - 1e-6:
        raise ValueError(f"inverse right Jacobian undefined near pi (|theta|={a:.6f})")
    s = skew(theta)
    if a < JAC_SERIES_ANGLE:
        a2 = a * a
        c = 1.0 / 12.0 + a2 / 720.0 + a2 * a2 / 30240.0
    else:
        c = 1.0 / (a * a) - (1.0 + np.cos(a)) / (2.0 * a * np.sin(a))
    return np.eye(3) + 0.5 * s + c * (s @ s)
