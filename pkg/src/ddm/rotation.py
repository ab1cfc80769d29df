"""SO(3) utilities: Rodrigues exponential, logarithm, left Jacobian.

The axis-angle vector convention is omega = theta * axis; small angles use
Taylor expansions so every function is smooth through zero.
"""

import numpy as np

_SMALL = 1e-8


def hat(w):
    """Skew-symmetric matrix with hat(w) @ v = w x v."""
    wx, wy, wz = w
    return np.array([[0.0, -wz, wy], [wz, 0.0, -wx], [-wy, wx, 0.0]])


def so3_exp(w) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    theta = np.linalg.norm(w)
    k = hat(w)
    k2 = k @ k
    if theta < _SMALL:
        a = 1.0 - theta**2 / 6.0
        b = 0.5 - theta**2 / 24.0
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / theta**2
    return np.eye(3) + a * k + b * k2


def so3_log(rot) -> np.ndarray:
    """Axis-angle of a rotation matrix, stable at 0 and near pi."""
    rot = np.asarray(rot, dtype=np.float64)
    cos = np.clip((np.trace(rot) - 1.0) / 2.0, -1.0, 1.0)
    vee = 0.5 * np.array(
        [rot[2, 1] - rot[1, 2], rot[0, 2] - rot[2, 0], rot[1, 0] - rot[0, 1]]
    )
    # measure sin from the skew part; recomputing sin(arccos(cos)) loses
    # 1/sin of the trace rounding near pi
    sin = np.linalg.norm(vee)
    theta = np.arctan2(sin, cos)
    if theta < _SMALL:
        return vee * (1.0 + theta**2 / 6.0)
    if sin > 1e-6:
        return vee * (theta / sin)
    # near pi: axis from the dominant diagonal of (R + I) / 2 = a a^T
    s = (rot + np.eye(3)) / 2.0
    k = int(np.argmax(np.diag(s)))
    axis = s[:, k] / np.sqrt(s[k, k])
    axis /= np.linalg.norm(axis)
    if np.dot(axis, vee) < 0:
        axis = -axis
    return theta * axis


def so3_left_jacobian(w) -> np.ndarray:
    """J_l such that exp(hat(J_l dw)) exp(hat(w)) = exp(hat(w + dw)) + O(dw^2)."""
    w = np.asarray(w, dtype=np.float64)
    theta = np.linalg.norm(w)
    k = hat(w)
    k2 = k @ k
    if theta < _SMALL:
        a = 0.5 - theta**2 / 24.0
        b = 1.0 / 6.0 - theta**2 / 120.0
    else:
        a = (1.0 - np.cos(theta)) / theta**2
        b = (theta - np.sin(theta)) / theta**3
    return np.eye(3) + a * k + b * k2


def rotation_angle_deg(r1, r2) -> float:
    """Geodesic angle between two rotations, in degrees."""
    cos = np.clip((np.trace(np.asarray(r1).T @ np.asarray(r2)) - 1.0) / 2.0, -1.0, 1.0)
    return float(np.degrees(np.arccos(cos)))


def is_rotation(rot, tol=1e-6) -> bool:
    rot = np.asarray(rot, dtype=np.float64)
    if rot.shape != (3, 3):
        return False
    return bool(
        np.allclose(rot.T @ rot, np.eye(3), atol=tol)
        and abs(np.linalg.det(rot) - 1.0) < tol
    )
