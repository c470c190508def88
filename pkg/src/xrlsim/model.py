"""Kinematics and differential kinematics of the two-leg closed chain.

Both feet are planted.  Each leg is a 6-DOF serial chain from a fixed
ankle point up to a hip that is rigidly attached to the torso link, so the
assembled mechanism has 6 degrees of freedom.  The 12-entry joint vector
is ordered right leg then left leg, ankle -> knee -> hip, frontal angle
before sagittal angle within each 2-DOF module:

    [phi_aR, th_aR, phi_kR, th_kR, phi_hR, th_hR,
     phi_aL, th_aL, phi_kL, th_kL, phi_hL, th_hL]

Frontal angles (phi) rotate about x, sagittal angles (th) about y.  The
world origin sits on the ground midway between the feet, z up; the right
ankle is at y = -w_base/2.

The task pose is the 6-vector [COM position; torso roll, pitch, yaw] with
the z-x-y (3-1-2) Euler convention of :mod:`xrlsim.rotations`.

The torso pose is estimated from both leg chains.  The lateral offset from
each hip to the torso center equals the stance half-width w_base/2, which
is what makes the two chain estimates coincide at the zero configuration;
the chains must always agree to the closure tolerance for a configuration
to be considered on the constraint manifold.
"""

from dataclasses import dataclass

import numpy as np

from .params import RobotParams
from .rotations import (
    GimbalLock,
    matrix_to_euler_zxy,
    project_so3,
    rot_xy,
    rotation_angle,
)

__all__ = [
    "ClosureViolation",
    "FrameSet",
    "GimbalLock",
    "JOINT_NAMES",
    "N_JOINTS",
    "com_position",
    "damped_pinv",
    "forward_kinematics",
    "hessian",
    "jacobian",
    "mirror_joints",
    "nullspace_projector",
    "task_pose",
    "task_pose_many",
    "torso_euler",
]

N_JOINTS = 12

JOINT_NAMES = [
    "phi_aR", "th_aR", "phi_kR", "th_kR", "phi_hR", "th_hR",
    "phi_aL", "th_aL", "phi_kL", "th_kL", "phi_hL", "th_hL",
]

# leg sign: ankle sits at y = sign * w_base/2
_SIGN_RIGHT = -1.0
_SIGN_LEFT = +1.0

CLOSURE_TOL_POS = 1e-6   # m
CLOSURE_TOL_ROT = 1e-6   # rad


class ClosureViolation(ValueError):
    """Left- and right-chain torso estimates disagree: q is off-manifold."""


@dataclass
class FrameSet:
    """World-frame joint locations and torso orientation for one configuration."""

    r_ankle_r: np.ndarray
    r_ankle_l: np.ndarray
    r_knee_r: np.ndarray
    r_knee_l: np.ndarray
    r_torso: np.ndarray
    R_torso: np.ndarray
    closure_pos_err: float = 0.0
    closure_rot_err: float = 0.0


def ankle_positions(params: RobotParams):
    """Constant foot-contact points (the feet never move)."""
    half = params.w_base / 2.0
    return (np.array([0.0, _SIGN_RIGHT * half, 0.0]),
            np.array([0.0, _SIGN_LEFT * half, 0.0]))


def _leg_frames(q6, sign, params):
    """Chain one leg from its planted ankle.  q6 is (..., 6).

    Returns (knee, hip, center, R_chain): the knee and hip joint points,
    this chain's estimate of the torso center, and the chain rotation.
    """
    half = params.w_base / 2.0
    ankle = np.zeros(q6.shape[:-1] + (3,))
    ankle[..., 1] = sign * half
    Ra = rot_xy(q6[..., 0], q6[..., 1])
    Rk = rot_xy(q6[..., 2], q6[..., 3])
    Rh = rot_xy(q6[..., 4], q6[..., 5])
    Rak = Ra @ Rk
    Rchain = Rak @ Rh
    knee = ankle + params.l2 * Ra[..., :, 2]
    hip = knee + params.l1 * Rak[..., :, 2]
    # hip-to-center offset points back toward the torso midline
    center = hip + (-sign * half) * Rchain[..., :, 1]
    return knee, hip, center, Rchain


def _chain_both(q, params):
    """Both leg chains for q of shape (..., 12)."""
    q = np.asarray(q, dtype=float)
    knee_r, hip_r, center_r, R_r = _leg_frames(q[..., :6], _SIGN_RIGHT, params)
    knee_l, hip_l, center_l, R_l = _leg_frames(q[..., 6:], _SIGN_LEFT, params)
    return (knee_r, knee_l), (hip_r, hip_l), (center_r, center_l), (R_r, R_l)


def forward_kinematics(q, params: RobotParams, closure_tol=True) -> FrameSet:
    """Joint locations and torso frame for a 12-entry joint vector.

    The torso position is the mean of the two chain estimates and the
    torso rotation the nearest orthonormal matrix to their mean.  With
    ``closure_tol=True`` the default tolerances apply; pass a
    ``(pos, rot)`` tuple to override, or ``None``/``False`` to skip the
    check (needed when evaluating finite-difference perturbations that sit
    slightly off the manifold).
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (N_JOINTS,):
        raise ValueError(f"expected a {N_JOINTS}-entry joint vector, got {q.shape}")
    if not np.all(np.isfinite(q)):
        raise ValueError("joint vector contains non-finite entries")
    (knee_r, knee_l), _, (center_r, center_l), (R_r, R_l) = _chain_both(q, params)

    pos_err = float(np.linalg.norm(center_r - center_l))
    rot_err = float(rotation_angle(R_r.T @ R_l))
    if closure_tol:
        tol = (CLOSURE_TOL_POS, CLOSURE_TOL_ROT) if closure_tol is True else closure_tol
        if pos_err > tol[0] or rot_err > tol[1]:
            raise ClosureViolation(
                f"chain torso estimates disagree: {pos_err:.3e} m / {rot_err:.3e} rad")

    ankle_r, ankle_l = ankle_positions(params)
    return FrameSet(
        r_ankle_r=ankle_r,
        r_ankle_l=ankle_l,
        r_knee_r=knee_r,
        r_knee_l=knee_l,
        r_torso=0.5 * (center_r + center_l),
        R_torso=project_so3(0.5 * (R_r + R_l)),
        closure_pos_err=pos_err,
        closure_rot_err=rot_err,
    )


def com_position(q, params: RobotParams) -> np.ndarray:
    """Total center of mass: torso lump plus the four knee/ankle modules."""
    fs = forward_kinematics(q, params, closure_tol=None)
    return _com_from_points(fs.r_torso, fs.r_knee_r, fs.r_knee_l, params)


def _com_from_points(r_torso, knee_r, knee_l, params):
    ankle_r, ankle_l = ankle_positions(params)
    total = (params.m_torso * r_torso
             + params.m_act * (knee_r + knee_l + ankle_r + ankle_l))
    return total / params.m_total


def torso_euler(R) -> tuple[float, float, float]:
    """(roll, pitch, yaw) of a torso rotation in the 3-1-2 convention."""
    roll, pitch, yaw = matrix_to_euler_zxy(R)
    return float(roll), float(pitch), float(yaw)


def task_pose(q, params: RobotParams) -> np.ndarray:
    """6-vector [x_com, y_com, z_com, roll, pitch, yaw]."""
    fs = forward_kinematics(q, params, closure_tol=None)
    com = _com_from_points(fs.r_torso, fs.r_knee_r, fs.r_knee_l, params)
    roll, pitch, yaw = matrix_to_euler_zxy(fs.R_torso)
    return np.array([com[0], com[1], com[2], roll, pitch, yaw])


def task_pose_many(q, params: RobotParams) -> np.ndarray:
    """Batched :func:`task_pose` for q of shape (..., 12), no closure check."""
    q = np.asarray(q, dtype=float)
    (knee_r, knee_l), _, (center_r, center_l), (R_r, R_l) = _chain_both(q, params)
    r_torso = 0.5 * (center_r + center_l)
    R_torso = project_so3(0.5 * (R_r + R_l))
    com = _com_from_points(r_torso, knee_r, knee_l, params)
    roll, pitch, yaw = matrix_to_euler_zxy(R_torso)
    out = np.empty(q.shape[:-1] + (6,))
    out[..., :3] = com
    out[..., 3] = roll
    out[..., 4] = pitch
    out[..., 5] = yaw
    return out


def jacobian(q, params: RobotParams, h: float = 1e-6) -> np.ndarray:
    """6x12 task Jacobian by central differences of the task pose."""
    q = np.asarray(q, dtype=float)
    probe = np.tile(q, (2 * N_JOINTS, 1))
    idx = np.arange(N_JOINTS)
    probe[2 * idx, idx] += h
    probe[2 * idx + 1, idx] -= h
    poses = task_pose_many(probe, params)
    return ((poses[0::2] - poses[1::2]) / (2.0 * h)).T


def hessian(q, params: RobotParams, h: float = 1e-4) -> np.ndarray:
    """Second partials of the task pose: H[i] is the symmetric 12x12
    matrix of d^2 p_i / dq_j dq_k.

    Uses the symmetric four-point mixed stencil on the pose map itself,
    which keeps each slice symmetric by construction and avoids the noise
    amplification of differencing an already-differenced Jacobian.  The
    step balances roundoff (eps/h^2) against truncation (h^2); smaller
    steps visibly pollute the load term of the joint-stiffness map.
    """
    q = np.asarray(q, dtype=float)
    pairs = [(j, k) for j in range(N_JOINTS) for k in range(j + 1, N_JOINTS)]
    n_cfg = 1 + 2 * N_JOINTS + 4 * len(pairs)
    probe = np.tile(q, (n_cfg, 1))
    # layout: [center | diag +/- | mixed ++ +- -+ --]
    pos = 1
    idx = np.arange(N_JOINTS)
    probe[pos + 2 * idx, idx] += h
    probe[pos + 2 * idx + 1, idx] -= h
    pos += 2 * N_JOINTS
    for j, k in pairs:
        probe[pos, [j, k]] += (h, h)
        probe[pos + 1, [j, k]] += (h, -h)
        probe[pos + 2, [j, k]] += (-h, h)
        probe[pos + 3, [j, k]] += (-h, -h)
        pos += 4
    poses = task_pose_many(probe, params)

    H = np.zeros((6, N_JOINTS, N_JOINTS))
    center = poses[0]
    plus = poses[1:1 + 2 * N_JOINTS:2]
    minus = poses[2:2 + 2 * N_JOINTS:2]
    diag = (plus - 2.0 * center + minus) / (h * h)   # (12, 6)
    for i in range(6):
        H[i, idx, idx] = diag[:, i]
    pos = 1 + 2 * N_JOINTS
    for j, k in pairs:
        pp, pm, mp, mm = poses[pos:pos + 4]
        mixed = (pp - pm - mp + mm) / (4.0 * h * h)
        H[:, j, k] = mixed
        H[:, k, j] = mixed
        pos += 4
    return H


def damped_pinv(J, damping: float = 1e-6) -> np.ndarray:
    """Damped (Tikhonov) pseudoinverse J^T (J J^T + damping^2 I)^-1.

    Behaves like the exact pseudoinverse away from singularities but keeps
    the output bounded near the straight-leg configuration.
    """
    J = np.asarray(J, dtype=float)
    m = J.shape[0]
    gram = J @ J.T + (damping * damping) * np.eye(m)
    return J.T @ np.linalg.inv(gram)


def nullspace_projector(J, damping: float = 1e-6) -> np.ndarray:
    """N = I - J+ J, the projector onto joint motions with no task effect."""
    J = np.asarray(J, dtype=float)
    n = J.shape[1]
    return np.eye(n) - damped_pinv(J, damping) @ J


def mirror_joints(q) -> np.ndarray:
    """Left/right mirror image of a configuration (frontal angles negate)."""
    q = np.asarray(q, dtype=float)
    out = np.empty_like(q)
    out[..., :6] = q[..., 6:]
    out[..., 6:] = q[..., :6]
    out[..., 0::2] *= -1.0
    return out
