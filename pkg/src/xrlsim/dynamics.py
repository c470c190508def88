"""Constrained rigid-body simulation of the planted-feet mechanism plus the
harness-coupled simulated operator.

With both feet planted the mechanism has exactly six degrees of freedom,
parameterized by the torso pose ``u = [x, y, z, roll, pitch, yaw]`` (3-1-2
Euler angles).  Joint angles follow from ``u`` through a per-leg closure
solve, so there is no constraint drift to manage.

Mass model: a point mass ``m_torso`` at the torso center and ``m_act`` at
each knee and ankle; links are massless.  The ankle masses never move and
therefore enter only the totals, not the inertia.

The per-leg closure solve exploits the chain structure: for a given hip
frame the knee lies on the circle where the spheres of radius l2 (about
the ankle) and l1 (about the hip) intersect.  Ankle and knee angles follow
in closed form from the knee point; the single circle parameter is pinned
by the requirement that the residual hip rotation factor as a frontal/
sagittal pair, which is a scalar root-finding problem solved by Newton
iteration from the seed configuration's knee.
"""

import math

from dataclasses import dataclass

import numpy as np

from .model import N_JOINTS
from .params import RobotParams
from .rotations import euler_zxy_to_matrix, rot_xy

__all__ = [
    "OperatorModel",
    "frontal_bow_seed",
    "OutOfReach",
    "QuinticTrack",
    "SimState",
    "SingularMass",
    "Simulator",
    "leg_ik",
    "operator_wrench",
    "standing_pose",
]

_SIGNS = (-1.0, +1.0)  # right leg, left leg


class OutOfReach(ValueError):
    """Requested torso pose cannot be assembled by one of the legs."""


class SingularMass(RuntimeError):
    """Generalized mass matrix is numerically singular."""


def standing_pose(params: RobotParams) -> np.ndarray:
    """Torso pose of the fully extended zero configuration."""
    return np.array([0.0, 0.0, params.l1 + params.l2, 0.0, 0.0, 0.0])


def frontal_bow_seed(params: RobotParams, z_torso: float) -> np.ndarray:
    """Joint-vector seed for a level torso at height ``z_torso`` with both
    knees bowed outward in the frontal plane (the natural squat stance).

    Only a branch selector: exact angles come from the closure solve.
    """
    l1, l2 = params.l1, params.l2
    D = float(z_torso)
    if not abs(l2 - l1) < D < l1 + l2:
        raise OutOfReach(f"no frontal bow at torso height {D:.4f} m")
    a = (D * D + l2 * l2 - l1 * l1) / (2.0 * D)
    dy = math.sqrt(max(l2 * l2 - a * a, 0.0))
    q = np.zeros(12)
    for leg, s in enumerate(_SIGNS):
        alpha_shank = math.atan2(s * dy, a)
        alpha_thigh = math.atan2(-s * dy, D - a)
        q[6 * leg + 0] = alpha_shank
        q[6 * leg + 2] = alpha_thigh - alpha_shank
        q[6 * leg + 4] = -alpha_thigh
    return q


@dataclass(frozen=True)
class SimState:
    """Snapshot of the simulation: minimal coordinates plus cached joints."""

    u: np.ndarray        # (6,) torso pose
    ud: np.ndarray       # (6,) torso velocity
    t: float
    q: np.ndarray        # (12,) joint angles consistent with u
    qd: np.ndarray       # (12,) joint velocities


# ---------------------------------------------------------------------------
# closure solve (batched over configurations x legs)
# ---------------------------------------------------------------------------

@dataclass
class _SolveAux:
    """Solver internals reused for analytic derivative assembly."""

    ang: np.ndarray      # (B, 2, 6)
    knee: np.ndarray     # (B, 2, 3)
    hip: np.ndarray      # (B, 2, 3)
    frames: tuple        # intermediate chain rotations
    ankles: np.ndarray   # (B, 2, 3)
    R_t: np.ndarray      # (B, 2, 3, 3)


def _hip_targets(r_torso, R_torso, params):
    """Hip frame origins for both legs; shapes (..., 2, 3)."""
    half = params.w_base / 2.0
    offs = np.zeros(R_torso.shape[:-2] + (2, 3))
    offs[..., 0, 1] = _SIGNS[0] * half
    offs[..., 1, 1] = _SIGNS[1] * half
    return r_torso[..., None, :] + (R_torso[..., None, :, :] @ offs[..., None])[..., 0]


def _cross(a, b):
    """Manual cross product on (..., 3) arrays (np.cross is overhead-bound
    at these sizes)."""
    out = np.empty(np.broadcast(a[..., 0], b[..., 0]).shape + (3,))
    out[..., 0] = a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1]
    out[..., 1] = a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2]
    out[..., 2] = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    return out


def _leg_fk(ang, ankles, params):
    """Forward chain of both legs from planted ankles.

    ang (..., 2, 6) module angles; returns (knee, hip, R_chain, frames)
    where frames = (R_a, R_ak) feeds the analytic Jacobian.
    """
    l1, l2 = params.l1, params.l2
    R_a = rot_xy(ang[..., 0], ang[..., 1])
    R_ak = R_a @ rot_xy(ang[..., 2], ang[..., 3])
    R_ch = R_ak @ rot_xy(ang[..., 4], ang[..., 5])
    knee = ankles + l2 * R_a[..., :, 2]
    hip = knee + l1 * R_ak[..., :, 2]
    return knee, hip, R_ch, (R_a, R_ak)


def _leg_residual(ang, ankles, hips, R_t, params):
    """Six-component closure residual per leg: hip-point error and the
    skew part of the chain-vs-target rotation mismatch."""
    knee, hip, R_ch, frames = _leg_fk(ang, ankles, params)
    E = R_ch @ np.swapaxes(R_t, -1, -2)
    e = np.empty(ang.shape[:-1] + (6,))
    e[..., :3] = hip - hips
    e[..., 3] = 0.5 * (E[..., 2, 1] - E[..., 1, 2])
    e[..., 4] = 0.5 * (E[..., 0, 2] - E[..., 2, 0])
    e[..., 5] = 0.5 * (E[..., 1, 0] - E[..., 0, 1])
    return e, knee, hip, frames


def _leg_jacobian(ang, ankles, knee, hip, frames):
    """Analytic 6x6 residual Jacobian (geometric, exact at the solution)."""
    R_a, R_ak = frames
    shape = ang.shape[:-1]
    w = np.zeros(shape + (6, 3))
    w[..., 0, 0] = -1.0                      # -x axis of the world
    # sagittal module axes: -R_pre @ Rx(a) @ y_hat, expanded
    c0, s0 = np.cos(ang[..., 0]), np.sin(ang[..., 0])
    w[..., 1, 1] = -c0
    w[..., 1, 2] = s0
    w[..., 2, :] = -R_a[..., :, 0]
    c2, s2 = np.cos(ang[..., 2]), np.sin(ang[..., 2])
    v3 = np.empty(shape + (3,))
    v3[..., 0] = 0.0
    v3[..., 1] = c2
    v3[..., 2] = -s2
    w[..., 3, :] = -(R_a @ v3[..., None])[..., 0]
    w[..., 4, :] = -R_ak[..., :, 0]
    c4, s4 = np.cos(ang[..., 4]), np.sin(ang[..., 4])
    v5 = np.empty(shape + (3,))
    v5[..., 0] = 0.0
    v5[..., 1] = c4
    v5[..., 2] = -s4
    w[..., 5, :] = -(R_ak @ v5[..., None])[..., 0]

    arm = np.empty(shape + (6, 3))
    arm[..., 0:2, :] = (hip - ankles)[..., None, :]
    arm[..., 2:4, :] = (hip - knee)[..., None, :]
    arm[..., 4:6, :] = 0.0
    J = np.empty(shape + (6, 6))
    J[..., :3, :] = np.swapaxes(_cross(w, arm), -1, -2)
    J[..., 3:, :] = np.swapaxes(w, -1, -2)
    return J


def _chart_guess(knee, ankles, hips, R_t, params):
    """Module angles from closed-form charts; initial guesses only."""
    n = (knee - ankles) / params.l2
    phi_a = np.arctan2(n[..., 1], n[..., 2])
    th_a = np.arctan2(-n[..., 0], np.hypot(n[..., 1], n[..., 2]))
    Ra = rot_xy(phi_a, th_a)
    m = (np.swapaxes(Ra, -1, -2) @ ((hips - knee) / params.l1)[..., None])[..., 0]
    phi_k = np.arctan2(m[..., 1], m[..., 2])
    th_k = np.arctan2(-m[..., 0], np.hypot(m[..., 1], m[..., 2]))
    W = np.swapaxes(Ra @ rot_xy(phi_k, th_k), -1, -2) @ R_t
    phi_h = np.arctan2(-W[..., 2, 1], W[..., 1, 1])
    th_h = np.arctan2(-W[..., 0, 2], W[..., 0, 0])
    return np.stack([phi_a, th_a, phi_k, th_k, phi_h, th_h], axis=-1)


def _newton(ang, ankles, hips, R_t, params, max_iter, tol):
    """Newton iteration on the per-leg closure residual (square system)."""
    e, knee, hip, frames = _leg_residual(ang, ankles, hips, R_t, params)
    err = np.abs(e).max(axis=-1)
    for _ in range(max_iter):
        active = err > tol
        if not np.any(active):
            break
        J = _leg_jacobian(ang, ankles, knee, hip, frames)
        # damped least-squares step: at singular seeds (straight knee) the
        # step shrinks to zero instead of amplifying factorization noise,
        # and the deterministic multi-start takes over
        JT = np.swapaxes(J, -1, -2)
        H = JT @ J + 1e-12 * np.eye(6)
        step = np.linalg.solve(H, -(JT @ e[..., None]))[..., 0]
        step = np.clip(step, -0.5, 0.5)
        ang = np.where(active[..., None], ang + step, ang)
        e, knee, hip, frames = _leg_residual(ang, ankles, hips, R_t, params)
        err = np.abs(e).max(axis=-1)
    return ang, err, knee, hip, frames


def _solve_batch(r_torso, R_torso, q_seed, params,
                 max_iter=30, tol=1e-12):
    """Solve both legs for a batch of torso poses.

    r_torso (B, 3), R_torso (B, 3, 3), q_seed (B, 12).  Gauss-Newton in
    joint-angle space from the seed configuration, so the branch nearest
    the seed is returned.  Raises OutOfReach if a hip target is outside
    the leg's annulus or the closure residual cannot be driven down.
    """
    B = r_torso.shape[0]
    l1, l2 = params.l1, params.l2
    half = params.w_base / 2.0
    ankles = np.zeros((B, 2, 3))
    ankles[:, 0, 1] = _SIGNS[0] * half
    ankles[:, 1, 1] = _SIGNS[1] * half
    hips = _hip_targets(r_torso, R_torso, params)

    L = np.linalg.norm(hips - ankles, axis=-1)
    lo, hi = abs(l2 - l1), l1 + l2
    if np.any(L > hi + 1e-9) or np.any(L < lo - 1e-9):
        raise OutOfReach(
            f"hip distance outside [{lo:.4f}, {hi:.4f}] m "
            f"(min {L.min():.4f}, max {L.max():.4f})")

    R_t = np.broadcast_to(R_torso[:, None, :, :], (B, 2, 3, 3))
    ang = np.stack([q_seed[:, :6], q_seed[:, 6:]], axis=1).copy()
    ang, err, knee, hip, frames = _newton(ang, ankles, hips, R_t, params, max_iter, tol)

    if np.any(err > 1e-10):
        # deterministic multi-start around the knee circle for stuck lanes
        bad = err > 1e-10
        dhat = (hips - ankles) / np.clip(L, 1e-12, None)[..., None]
        t_c = (L * L + l2 * l2 - l1 * l1) / (2.0 * np.clip(L, 1e-12, None))
        rho = np.sqrt(np.maximum(l2 * l2 - t_c * t_c, 0.0))
        c = ankles + t_c[..., None] * dhat
        use_x = np.abs(dhat[..., 0]) < 0.9
        u_ref = np.where(use_x[..., None], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0])
        e1 = u_ref - np.sum(u_ref * dhat, axis=-1, keepdims=True) * dhat
        e1 = e1 / np.linalg.norm(e1, axis=-1, keepdims=True)
        e2 = np.cross(dhat, e1)
        best_ang, best_err = ang, err
        for gam in np.linspace(0.0, 2.0 * np.pi, 16, endpoint=False):
            k_guess = c + rho[..., None] * (np.cos(gam) * e1 + np.sin(gam) * e2)
            guess = _chart_guess(k_guess, ankles, hips, R_t, params)
            trial = np.where(bad[..., None], guess, ang)
            trial, t_err, _, _, _ = _newton(trial, ankles, hips, R_t, params,
                                            max_iter, tol)
            better = bad & (t_err < best_err)
            best_ang = np.where(better[..., None], trial, best_ang)
            best_err = np.where(better, t_err, best_err)
        ang, err = best_ang, best_err
        if np.any(err > 1e-10):
            raise OutOfReach("leg closure residual did not converge")
        _, _, knee, hip, frames = _newton(ang, ankles, hips, R_t, params, 1, tol)

    q = np.concatenate([ang[:, 0, :], ang[:, 1, :]], axis=-1)
    aux = _SolveAux(ang=ang, knee=knee, hip=hip, frames=frames,
                    ankles=ankles, R_t=R_t)
    return q, knee, aux


def leg_ik(u, q_seed, params: RobotParams) -> np.ndarray:
    """Joint angles assembling the mechanism at torso pose u.

    ``q_seed`` selects the solution branch (nearest knee position).  The
    residual of the returned solution is below 1e-10 in mixed units.
    """
    u = np.asarray(u, dtype=float)
    q_seed = np.asarray(q_seed, dtype=float)
    R = euler_zxy_to_matrix(u[3], u[4], u[5])
    q, _, _ = _solve_batch(u[None, :3], R[None], q_seed[None], params)
    return q[0]


def _knees_from_q(q, params):
    """Knee points of a (..., 12) joint vector (seed extraction)."""
    q = np.asarray(q, dtype=float)
    half = params.w_base / 2.0
    knees = []
    for i, s in enumerate(_SIGNS):
        q6 = q[..., 6 * i:6 * i + 3]
        Ra = rot_xy(q[..., 6 * i + 0], q[..., 6 * i + 1])
        ankle = np.zeros(q.shape[:-1] + (3,))
        ankle[..., 1] = s * half
        knees.append(ankle + params.l2 * Ra[..., :, 2])
    return np.stack(knees, axis=-2)


# ---------------------------------------------------------------------------
# operator model
# ---------------------------------------------------------------------------

class QuinticTrack:
    """Piecewise-quintic C2 scalar trajectory with replanning.

    Before the first segment the track holds its initial value; after the
    last it holds the final value with zero rate.
    """

    def __init__(self, value: float):
        self._segs = []          # list of (t0, t1, coeffs[6])
        self._rest = (float(value), 0.0, 0.0)

    def eval(self, t: float):
        """(value, rate, accel) at time t."""
        seg = None
        for t0, t1, c in self._segs:
            if t >= t0:
                seg = (t0, t1, c)
            else:
                break
        if seg is None:
            return self._rest[0], 0.0, 0.0
        t0, t1, c = seg
        tau = min(t - t0, t1 - t0)
        x = ((((c[5] * tau + c[4]) * tau + c[3]) * tau + c[2]) * tau + c[1]) * tau + c[0]
        v = (((5 * c[5] * tau + 4 * c[4]) * tau + 3 * c[3]) * tau + 2 * c[2]) * tau + c[1]
        a = ((20 * c[5] * tau + 12 * c[4]) * tau + 6 * c[3]) * tau + 2 * c[2]
        if t >= t1:
            return x, 0.0, 0.0
        return x, v, a

    def plan(self, t0: float, duration: float, target: float):
        """Append a segment from the current state at t0 to rest at target."""
        if duration <= 0:
            raise ValueError("duration must be > 0")
        x0, v0, a0 = self.eval(t0)
        T = duration
        # quintic with (x0, v0, a0) -> (target, 0, 0)
        c = np.zeros(6)
        c[0], c[1], c[2] = x0, v0, a0 / 2.0
        dx = target - x0 - v0 * T - 0.5 * a0 * T * T
        dv = -v0 - a0 * T
        da = -a0
        c[3] = (20 * dx - 8 * dv * T + da * T * T) / (2 * T ** 3)
        c[4] = (-30 * dx + 14 * dv * T - 2 * da * T * T) / (2 * T ** 4)
        c[5] = (12 * dx - 6 * dv * T + da * T * T) / (2 * T ** 5)
        # drop any scheduled segments that start later than this replan
        self._segs = [s for s in self._segs if s[0] < t0] + [(t0, t0 + T, c)]

    @property
    def final_value(self) -> float:
        if self._segs:
            t1 = self._segs[-1][1]
            return self.eval(t1)[0]
        return self._rest[0]


@dataclass
class OperatorModel:
    """Spring-damper harness coupling to the human's intent trajectories.

    The human leads height and pitch only; the coupling is soft relative
    to the balance stiffness so the machine follows without fighting.
    """

    z_track: QuinticTrack
    theta_track: QuinticTrack
    k_z: float = 2000.0      # N/m
    b_z: float = 200.0       # N*s/m
    k_theta: float = 150.0   # N*m/rad
    b_theta: float = 15.0    # N*m*s/rad
    f_max: float = 400.0     # interaction clamp (N and N*m)

    @classmethod
    def holding(cls, z: float, theta: float = 0.0, **kw) -> "OperatorModel":
        return cls(z_track=QuinticTrack(z), theta_track=QuinticTrack(theta), **kw)


def operator_wrench(t: float, p, pd, op: OperatorModel) -> np.ndarray:
    """Task wrench the harness applies to the robot (z force, pitch torque)."""
    z_h, zd_h, _ = op.z_track.eval(t)
    th_h, thd_h, _ = op.theta_track.eval(t)
    f_z = op.k_z * (z_h - p[2]) + op.b_z * (zd_h - pd[2])
    t_th = op.k_theta * (th_h - p[4]) + op.b_theta * (thd_h - pd[4])
    w = np.zeros(6)
    w[2] = np.clip(f_z, -op.f_max, op.f_max)
    w[4] = np.clip(t_th, -op.f_max, op.f_max)
    return w


# ---------------------------------------------------------------------------
# generalized dynamics
# ---------------------------------------------------------------------------

@dataclass
class _Assembled:
    """Per-configuration dynamic quantities reused by the runner."""

    q: np.ndarray            # (12,)
    knees: np.ndarray        # (2, 3)
    G: np.ndarray            # (12, 6) dq/du
    M: np.ndarray            # (6, 6)
    q_grav: np.ndarray       # (6,)
    jac_task: np.ndarray     # (6, 6) dp/du
    dM: np.ndarray | None    # (6, 6, 6) dM/du_l or None if skipped
    com: np.ndarray          # (3,)


class Simulator:
    """Fixed-step integrator for the closed-chain mechanism.

    Semi-implicit Euler: velocities update from the current accelerations,
    then positions from the new velocities.  All randomness lives outside;
    stepping is deterministic.

    Near full leg extension the minimal coordinates hit a workspace
    boundary (the knee cannot hyperextend).  A stiff strut spring models
    the structural stiffness of the straight leg there, so an operator
    pulling upward meets resistance instead of driving the closure solve
    out of its domain.  ``initial_state`` therefore settles the default
    start pose just inside that boundary.
    """

    FD_C = 5e-4        # step for the dM/du 5-point stencil
    COND_LIMIT = 1e12
    GUARD_MARGIN = 5e-3     # m of leg extension kept in reserve
    GUARD_K = 2.0e5         # N/m hard-stop stiffness
    GUARD_B = 1000.0        # N*s/m hard-stop damping
    START_SETTLE = 5e-3     # m the standing pose starts below full reach

    def __init__(self, params: RobotParams, workspace_guard: bool = True):
        self.params = params
        self.workspace_guard = workspace_guard
        self._probe = self._probe_offsets()

    def _probe_offsets(self):
        """Offsets (in u) of the configurations solved per assembly call:
        the center plus the dM/du five-point stencil probes."""
        hc = self.FD_C
        offs = [np.zeros(6)]
        eye = np.eye(6)
        for l in range(6):
            for sgn in (-2.0, -1.0, 1.0, 2.0):
                offs.append(sgn * hc * eye[l])
        return np.array(offs)    # (25, 6)

    @staticmethod
    def _euler_rate_map(roll, pitch):
        """Matrix taking (roll, pitch, yaw) rates to world angular velocity.

        Signed for the rotation convention of :mod:`xrlsim.rotations`;
        batched over leading dimensions.
        """
        roll = np.asarray(roll, dtype=float)
        pitch = np.asarray(pitch, dtype=float)
        cf, sf = np.cos(roll), np.sin(roll)
        ct, st = np.cos(pitch), np.sin(pitch)
        z = np.zeros_like(cf)
        o = np.ones_like(cf)
        return -np.stack(
            [np.stack([ct, z, -st * cf], -1),
             np.stack([z, o, sf], -1),
             np.stack([st, z, ct * cf], -1)], -2)

    def _implicit_derivatives(self, aux: _SolveAux, batch_u, R_all):
        """Per-configuration dq/du and knee Jacobians via the implicit
        function theorem at the solved closure residual.

        Returns (dang_du (B, 2, 6, 6), J_kn (B, 2, 3, 6), C_eul (B, 3, 3)).
        """
        ang, knee, hip, frames = aux.ang, aux.knee, aux.hip, aux.frames
        J_leg = _leg_jacobian(ang, aux.ankles, knee, hip, frames)

        C_eul = self._euler_rate_map(batch_u[:, 3], batch_u[:, 4])  # (B, 3, 3)
        r_off = hip - batch_u[:, None, :3]                          # (B, 2, 3)
        # d(hip target)/d(euler) column k is (C e_k) x r_off
        cols = np.swapaxes(C_eul, -1, -2)                            # rows = C e_k
        dhip_dT = _cross(cols[:, None, :, :], r_off[:, :, None, :])  # (B,2,k,3)
        dhip_dT = np.swapaxes(dhip_dT, -1, -2)                       # (B,2,3,k)

        de_du = np.zeros(ang.shape[:2] + (6, 6))
        de_du[..., :3, :3] = -np.eye(3)
        de_du[..., :3, 3:] = -dhip_dT
        de_du[..., 3:, 3:] = -C_eul[:, None, :, :]
        dang_du = -np.linalg.solve(J_leg, de_du)                     # (B,2,6,6)

        # knee point depends on the first two module angles only
        w1 = np.zeros(knee.shape)
        w1[..., 0] = -1.0
        w2 = -frames[0][..., :, 1]
        shin = knee - aux.ankles
        dk_dang = np.stack([_cross(w1, shin), _cross(w2, shin)], axis=-1)
        J_kn = dk_dang @ dang_du[..., 0:2, :]                        # (B,2,3,6)
        return dang_du, J_kn, C_eul

    def _mass_matrices(self, J_kn, C_eul, R_all):
        """Batched 6x6 mass matrices from knee Jacobians and torso inertia."""
        p = self.params
        B = J_kn.shape[0]
        M = np.zeros((B, 6, 6))
        M[:, :3, :3] = p.m_torso * np.eye(3)
        M += p.m_act * np.einsum("blji,bljk->bik", J_kn, J_kn)
        I_world = R_all @ np.diag(p.torso_inertia) @ np.swapaxes(R_all, -1, -2)
        M[:, 3:, 3:] += np.swapaxes(C_eul, -1, -2) @ I_world @ C_eul
        return M

    def assemble(self, u, q_seed, with_coriolis=True) -> _Assembled:
        """Kinematic and dynamic quantities at torso pose u.

        One closure solve per configuration; dq/du and the mass-point
        Jacobians are exact implicit derivatives at the solution, and only
        dM/du is finite-differenced (five-point stencil per coordinate).
        The stencil lanes are seeded by first-order extrapolation from the
        center solution, so they converge in about one Newton step.
        """
        u = np.asarray(u, dtype=float)
        p = self.params

        R0 = euler_zxy_to_matrix(u[3], u[4], u[5])
        q_c, knees_c, aux_c = _solve_batch(
            u[None, :3], R0[None], np.asarray(q_seed, dtype=float)[None], p)
        dang_du, J_kn, C_eul = self._implicit_derivatives(aux_c, u[None], R0[None])
        M = self._mass_matrices(J_kn, C_eul, R0[None])[0]

        q = q_c[0]
        knees = knees_c[0]
        G = np.concatenate([dang_du[0, 0], dang_du[0, 1]], axis=0)  # (12, 6)
        J_knees = J_kn[0]                                            # (2, 3, 6)

        # gravity: -g * d(sum m_i z_i)/du ; torso z is u[2] itself
        dz = p.m_torso * np.eye(3, 6, k=0)[2]
        dz = dz + p.m_act * (J_knees[0][2] + J_knees[1][2])
        q_grav = -p.g * dz

        # task map derivative: COM rows from mass points, Euler rows exact
        jac_task = np.zeros((6, 6))
        jac_task[:3, :3] = (p.m_torso / p.m_total) * np.eye(3)
        jac_task[:3] += (p.m_act / p.m_total) * (J_knees[0] + J_knees[1])
        jac_task[3:, 3:] = np.eye(3)

        dM = None
        if with_coriolis:
            offs = self._probe[1:]                      # (24, 6)
            batch_u = u[None, :] + offs
            R_all = euler_zxy_to_matrix(batch_u[:, 3], batch_u[:, 4],
                                        batch_u[:, 5])
            seeds = q + offs @ G.T                      # first-order warm start
            _, _, aux = _solve_batch(batch_u[:, :3], R_all, seeds, p)
            _, J_kn_p, C_eul_p = self._implicit_derivatives(aux, batch_u, R_all)
            M_all = self._mass_matrices(J_kn_p, C_eul_p, R_all)
            # probes ordered (-2, -1, +1, +2) per coordinate
            dM = np.empty((6, 6, 6))
            for l in range(6):
                m_m2, m_m1, m_p1, m_p2 = M_all[4 * l: 4 * l + 4]
                dM[l] = (m_m2 - 8.0 * m_m1 + 8.0 * m_p1 - m_p2) / (12.0 * self.FD_C)

        ankle_r = np.array([0.0, _SIGNS[0] * p.w_base / 2.0, 0.0])
        ankle_l = np.array([0.0, _SIGNS[1] * p.w_base / 2.0, 0.0])
        com = (p.m_torso * u[:3] + p.m_act * (knees[0] + knees[1]
                                              + ankle_r + ankle_l)) / p.m_total
        return _Assembled(q=q, knees=knees, G=G, M=M, q_grav=q_grav,
                          jac_task=jac_task, dM=dM, com=com)

    @staticmethod
    def coriolis(dM, ud):
        """Velocity-product generalized force from the dM/du tensor."""
        # c_k = sum_ij dM[j][k,i] ud_i ud_j - 1/2 sum_ij dM[k][i,j] ud_i ud_j
        first = np.einsum("jki,i,j->k", dM, ud, ud)
        second = 0.5 * np.einsum("kij,i,j->k", dM, ud, ud)
        return first - second

    def strut_force(self, u, ud):
        """Generalized force from the leg extension/fold hard stops.

        Zero in the interior of the workspace.  Near full extension the
        straight knee acts as a stiff strut; near full fold the thigh
        contacts the shank.  Both are modeled as stiff springs on the
        hip-to-ankle distance so the closure solve never leaves its
        domain under operator-scale forces.
        """
        p = self.params
        u = np.asarray(u, dtype=float)
        R = euler_zxy_to_matrix(u[3], u[4], u[5])
        hips = _hip_targets(u[:3], R, p)                    # (2, 3)
        ankles = np.zeros((2, 3))
        ankles[0, 1] = _SIGNS[0] * p.w_base / 2.0
        ankles[1, 1] = _SIGNS[1] * p.w_base / 2.0
        hi_limit = p.leg_reach - self.GUARD_MARGIN
        lo_limit = abs(p.l2 - p.l1) + self.GUARD_MARGIN
        Q = np.zeros(6)
        h = 1e-7
        for leg in range(2):
            d = hips[leg] - ankles[leg]
            L = np.linalg.norm(d)
            if lo_limit <= L <= hi_limit:
                continue
            dhat = d / L
            # dL/du via the hip-point Jacobian (translation rows exact)
            J_hip = np.zeros((3, 6))
            J_hip[:, :3] = np.eye(3)
            off = np.zeros(3)
            off[1] = _SIGNS[leg] * p.w_base / 2.0
            for k in range(3):
                up = u.copy(); up[3 + k] += h
                um = u.copy(); um[3 + k] -= h
                Rp = euler_zxy_to_matrix(up[3], up[4], up[5])
                Rm = euler_zxy_to_matrix(um[3], um[4], um[5])
                J_hip[:, 3 + k] = (Rp @ off - Rm @ off) / (2.0 * h)
            dL_du = dhat @ J_hip
            rate = dL_du @ ud
            limit = hi_limit if L > hi_limit else lo_limit
            f = -self.GUARD_K * (L - limit) - self.GUARD_B * rate
            Q += f * dL_du
        return Q

    # -- public dynamics interface -----------------------------------------

    def initial_state(self, u0=None, q_seed=None) -> SimState:
        p = self.params
        if u0 is None:
            u0 = standing_pose(p)
            u0[2] -= self.START_SETTLE
        else:
            u0 = np.asarray(u0, dtype=float)
        if q_seed is None:
            q_seed = np.zeros(N_JOINTS)
        R = euler_zxy_to_matrix(u0[3], u0[4], u0[5])
        q, knees, _ = _solve_batch(u0[None, :3], R[None],
                                   np.asarray(q_seed, dtype=float)[None], p)
        return SimState(u=u0.copy(), ud=np.zeros(6), t=0.0,
                        q=q[0], qd=np.zeros(12))

    def generalized_dynamics(self, state: SimState, tau, f_op_task,
                             q_ext=None, assembled: _Assembled | None = None):
        """Acceleration of the minimal coordinates.

        tau: 12 joint torques; f_op_task: 6 task wrench from the harness;
        q_ext: optional direct generalized force on the torso (pushes).
        """
        a = assembled or self.assemble(state.u, state.q)
        ev = np.linalg.eigvalsh(a.M)
        if ev[0] <= 0 or ev[-1] / ev[0] > self.COND_LIMIT:
            raise SingularMass(f"mass matrix condition {ev[-1] / max(ev[0], 1e-300):.2e}")
        rhs = a.G.T @ np.asarray(tau, dtype=float) + a.q_grav
        rhs = rhs + a.jac_task.T @ np.asarray(f_op_task, dtype=float)
        if q_ext is not None:
            rhs = rhs + q_ext
        if self.workspace_guard:
            rhs = rhs + self.strut_force(state.u, state.ud)
        if a.dM is not None:
            rhs = rhs - self.coriolis(a.dM, state.ud)
        return np.linalg.solve(a.M, rhs), a

    def step(self, state: SimState, tau, f_op_task, dt: float,
             q_ext=None, assembled: _Assembled | None = None) -> SimState:
        """Semi-implicit Euler update; returns the new state."""
        udd, a = self.generalized_dynamics(state, tau, f_op_task, q_ext, assembled)
        ud_new = state.ud + dt * udd
        u_new = state.u + dt * ud_new
        a_new = self.assemble(u_new, a.q, with_coriolis=False)
        return SimState(u=u_new, ud=ud_new, t=state.t + dt,
                        q=a_new.q, qd=a_new.G @ ud_new)

    # -- energy bookkeeping -------------------------------------------------

    def energy(self, state: SimState, assembled: _Assembled | None = None):
        """(kinetic, potential) with the ground plane as the zero level.

        The mass matrix already carries the torso box inertia, so the
        kinetic term is just the quadratic form in the minimal velocities.
        """
        a = assembled or self.assemble(state.u, state.q, with_coriolis=False)
        p = self.params
        kin = 0.5 * state.ud @ a.M @ state.ud
        pot = p.g * (p.m_torso * state.u[2]
                     + p.m_act * (a.knees[0][2] + a.knees[1][2]))
        return kin, pot
