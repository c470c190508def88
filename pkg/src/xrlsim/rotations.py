"""Elemental rotations and the z-x-y (3-1-2) Euler decomposition.

All rotation matrices here follow the direction-cosine convention in which

    Rx(a) = [[1, 0, 0], [0, ca, sa], [0, -sa, ca]]

(and cyclically for Ry, Rz).  With this choice the 3-1-2 factorization
R = Ry(pitch) @ Rx(roll) @ Rz(yaw) decomposes through the closed forms

    roll  = asin(R[1, 2])
    pitch = atan2(-R[0, 2], R[2, 2])
    yaw   = atan2(-R[1, 0], R[1, 1])

which is the convention used throughout the kinematic model.  Every
function broadcasts over leading batch dimensions; matrices are built by
direct element writes (these sit on the simulation hot path).
"""

import numpy as np

GIMBAL_GUARD = 1e-9


class GimbalLock(ValueError):
    """Roll is within the guard band of +-pi/2; pitch/yaw are undefined."""


def _empty(shape):
    R = np.zeros(shape + (3, 3))
    return R


def rot_x(a):
    a = np.asarray(a, dtype=float)
    c, s = np.cos(a), np.sin(a)
    R = _empty(a.shape)
    R[..., 0, 0] = 1.0
    R[..., 1, 1] = c
    R[..., 1, 2] = s
    R[..., 2, 1] = -s
    R[..., 2, 2] = c
    return R


def rot_y(a):
    a = np.asarray(a, dtype=float)
    c, s = np.cos(a), np.sin(a)
    R = _empty(a.shape)
    R[..., 0, 0] = c
    R[..., 0, 2] = -s
    R[..., 1, 1] = 1.0
    R[..., 2, 0] = s
    R[..., 2, 2] = c
    return R


def rot_z(a):
    a = np.asarray(a, dtype=float)
    c, s = np.cos(a), np.sin(a)
    R = _empty(a.shape)
    R[..., 0, 0] = c
    R[..., 0, 1] = s
    R[..., 1, 0] = -s
    R[..., 1, 1] = c
    R[..., 2, 2] = 1.0
    return R


def rot_xy(a, b):
    """Rx(a) @ Ry(b), the two-axis joint-module rotation, expanded."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ca, sa = np.cos(a), np.sin(a)
    cb, sb = np.cos(b), np.sin(b)
    R = _empty(np.broadcast(ca, cb).shape)
    R[..., 0, 0] = cb
    R[..., 0, 2] = -sb
    R[..., 1, 0] = sa * sb
    R[..., 1, 1] = ca
    R[..., 1, 2] = sa * cb
    R[..., 2, 0] = ca * sb
    R[..., 2, 1] = -sa
    R[..., 2, 2] = ca * cb
    return R


def euler_zxy_to_matrix(roll, pitch, yaw):
    """Ry(pitch) @ Rx(roll) @ Rz(yaw), expanded to closed form."""
    roll = np.asarray(roll, dtype=float)
    pitch = np.asarray(pitch, dtype=float)
    yaw = np.asarray(yaw, dtype=float)
    cf, sf = np.cos(roll), np.sin(roll)
    ct, st = np.cos(pitch), np.sin(pitch)
    cp, sp = np.cos(yaw), np.sin(yaw)
    R = _empty(np.broadcast(cf, ct, cp).shape)
    R[..., 0, 0] = ct * cp - st * sf * sp
    R[..., 0, 1] = ct * sp + st * sf * cp
    R[..., 0, 2] = -st * cf
    R[..., 1, 0] = -cf * sp
    R[..., 1, 1] = cf * cp
    R[..., 1, 2] = sf
    R[..., 2, 0] = st * cp + ct * sf * sp
    R[..., 2, 1] = st * sp - ct * sf * cp
    R[..., 2, 2] = ct * cf
    return R


def matrix_to_euler_zxy(R, guard: float = GIMBAL_GUARD):
    """Decompose to (roll, pitch, yaw); raises GimbalLock near |roll| = pi/2."""
    R = np.asarray(R, dtype=float)
    s_roll = R[..., 1, 2]
    if np.any(np.abs(s_roll) >= 1.0 - guard):
        raise GimbalLock("roll within guard band of +-pi/2")
    roll = np.arcsin(s_roll)
    pitch = np.arctan2(-R[..., 0, 2], R[..., 2, 2])
    yaw = np.arctan2(-R[..., 1, 0], R[..., 1, 1])
    return roll, pitch, yaw


def project_so3(M):
    """Nearest rotation matrix (Frobenius) to M, via SVD; batched."""
    U, _, Vt = np.linalg.svd(M)
    R = U @ Vt
    # keep det = +1
    det = np.linalg.det(R)
    if np.any(det < 0):
        U = U.copy()
        U[..., :, 2] *= np.where(det < 0, -1.0, 1.0)[..., None]
        R = U @ Vt
    return R


def rotation_angle(R):
    """Geodesic angle of a rotation matrix (batched)."""
    tr = np.trace(R, axis1=-2, axis2=-1) if R.ndim > 2 else np.trace(R)
    c = np.clip((tr - 1.0) / 2.0, -1.0, 1.0)
    return np.arccos(c)
