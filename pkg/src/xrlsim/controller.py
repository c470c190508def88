"""Central whole-body controller.

The task space splits into a robot-regulated subspace (x, y, roll, yaw by
default) and a human-led subspace (z, pitch).  In the human-led directions
the positional reference is set to the measured output, so the feedback
error there is identically zero and the machine conforms to the operator;
it applies only a feedforward wrench (gravity compensation plus upward
assist) in those directions.  The task-space impedance is then mapped to
joint-space stiffness/damping so that independent per-joint servos realize
it, with the cross-coupled remainder shipped separately and droppable.
"""

from dataclasses import dataclass, field

import numpy as np

from . import model
from .params import RobotParams

__all__ = [
    "CentralController",
    "CentralOutput",
    "CommandInOpenLoopSubspace",
    "GainConfig",
    "GainIndefinite",
    "NoConvergence",
    "ProjectionPair",
    "build_reference",
    "feedforward_torques",
    "feedforward_wrench",
    "inverse_kinematics",
    "joint_damping",
    "joint_stiffness",
    "project",
    "task_wrench",
]


class NoConvergence(RuntimeError):
    """Inverse kinematics failed to reach the target within budget."""


class CommandInOpenLoopSubspace(ValueError):
    """A closed-loop command had a component in the human-led directions."""


class GainIndefinite(RuntimeError):
    """Joint stiffness could not be made positive (semi)definite."""


DEFAULT_OPEN_LOOP_DIAG = (0.0, 0.0, 1.0, 0.0, 1.0, 0.0)   # z and pitch


@dataclass(frozen=True)
class ProjectionPair:
    """Complementary diagonal projectors onto the open- and closed-loop
    task subspaces.  The diagonal is 0/1 so projections are exact."""

    s_diag: np.ndarray = field(
        default_factory=lambda: np.array(DEFAULT_OPEN_LOOP_DIAG))

    def __post_init__(self):
        d = np.asarray(self.s_diag, dtype=float)
        if d.shape != (6,) or not np.all((d == 0.0) | (d == 1.0)):
            raise ValueError("projection diagonal must be six 0/1 entries")
        object.__setattr__(self, "s_diag", d)

    @property
    def S(self) -> np.ndarray:
        return np.diag(self.s_diag)

    @property
    def S_perp(self) -> np.ndarray:
        return np.eye(6) - np.diag(self.s_diag)

    @property
    def open_mask(self) -> np.ndarray:
        return self.s_diag == 1.0


def project(p, pair: ProjectionPair):
    """(p_C, p_O): closed- and open-loop components; p_C + p_O == p exactly."""
    p = np.asarray(p, dtype=float)
    p_o = np.where(pair.open_mask, p, 0.0)
    p_c = np.where(pair.open_mask, 0.0, p)
    return p_c, p_o


def build_reference(p_c_cmd, p_meas, pair: ProjectionPair) -> np.ndarray:
    """Reference pose: commanded closed-loop part plus the measured
    open-loop part, so the open-loop feedback error is exactly zero."""
    p_c_cmd = np.asarray(p_c_cmd, dtype=float)
    if np.any(p_c_cmd[pair.open_mask] != 0.0):
        raise CommandInOpenLoopSubspace(
            "closed-loop command has entries in the open-loop directions")
    p_meas = np.asarray(p_meas, dtype=float)
    return p_c_cmd + np.where(pair.open_mask, p_meas, 0.0)


def feedforward_wrench(params: RobotParams, f_assist: float | None = None) -> np.ndarray:
    """Gravity compensation for the whole machine plus the upward assist,
    as a task wrench along z."""
    w = np.zeros(6)
    assist = params.f_assist if f_assist is None else float(f_assist)
    w[2] = params.g * params.m_total + assist
    return w


def feedforward_torques(J, wrench) -> np.ndarray:
    """Distribute a task wrench over the joints: tau = J^T w."""
    return np.asarray(J).T @ np.asarray(wrench, dtype=float)


def task_wrench(p_ref, p, pd_ref, pd, Kp, Bp, w_ff) -> np.ndarray:
    """Task-space PD with feedforward: F = Kp e + Bp e_dot + w_ff."""
    e = np.asarray(p_ref, dtype=float) - np.asarray(p, dtype=float)
    ed = np.asarray(pd_ref, dtype=float) - np.asarray(pd, dtype=float)
    return np.asarray(Kp) @ e + np.asarray(Bp) @ ed + np.asarray(w_ff, dtype=float)


def inverse_kinematics(p_ref, q_seed, params: RobotParams, *,
                       damping: float = 1e-6, step_cap: float = 0.2,
                       max_iter: int = 50, tol: float = 1e-8) -> np.ndarray:
    """Damped least-squares iteration from the seed configuration.

    Minimum-norm updates suppress nullspace drift, so the redundancy
    resolves toward the solution nearest the seed.  The step cap keeps
    iterates bounded near the straight-leg singularity.
    """
    q = np.array(q_seed, dtype=float)
    p_ref = np.asarray(p_ref, dtype=float)
    for _ in range(max_iter):
        e = p_ref - model.task_pose(q, params)
        if np.linalg.norm(e) <= tol:
            return q
        J = model.jacobian(q, params)
        dq = model.damped_pinv(J, damping) @ e
        biggest = np.abs(dq).max()
        if biggest > step_cap:
            dq *= step_cap / biggest
        q = q + dq
    raise NoConvergence(f"no IK convergence after {max_iter} iterations "
                        f"(residual {np.linalg.norm(e):.3e})")


def joint_stiffness(J, H, F, Kp, K0, *, max_k0_scale: float = 8.0,
                    damping: float = 1e-6):
    """Joint-space stiffness realizing the task stiffness Kp under load F:

        K_q = N K0 + J^T Kp J - sum_i H_i F_i

    The Hessian term accounts for the configuration dependence of J^T
    under the current wrench.  If the symmetric part is materially
    indefinite, K0 doubles (up to ``max_k0_scale`` of nominal) before
    GainIndefinite is raised.  Directions that map to the open-loop task
    axes legitimately carry zero stiffness, so the check accepts a
    positive-semidefinite result.
    """
    J = np.asarray(J, dtype=float)
    n = J.shape[1]
    N = model.nullspace_projector(J, damping)
    K0 = np.diag(np.broadcast_to(np.asarray(K0, dtype=float), n))
    base = J.T @ np.asarray(Kp) @ J - np.einsum("ijk,i->jk", np.asarray(H),
                                                np.asarray(F, dtype=float))
    scale = 1.0
    while True:
        K_q = N @ (scale * K0) + base
        sym = 0.5 * (K_q + K_q.T)
        min_eig = np.linalg.eigvalsh(sym)[0]
        if min_eig >= -1e-8 * max(1.0, np.linalg.norm(sym)):
            return K_q
        if 2.0 * scale > max_k0_scale:
            raise GainIndefinite(
                f"joint stiffness indefinite (min eig {min_eig:.3e}) "
                f"even at {scale:g}x nominal nullspace stiffness")
        scale *= 2.0


def joint_damping(J, Bp, B0, *, damping: float = 1e-6) -> np.ndarray:
    """Joint-space damping: B_q = N B0 + J^T Bp J."""
    J = np.asarray(J, dtype=float)
    n = J.shape[1]
    N = model.nullspace_projector(J, damping)
    B0 = np.diag(np.broadcast_to(np.asarray(B0, dtype=float), n))
    return N @ B0 + J.T @ np.asarray(Bp) @ J


@dataclass
class GainConfig:
    """Task- and joint-space gains.  Task gains are masked so the
    closed-loop controller cannot act along the open-loop directions."""

    kp: np.ndarray = field(default_factory=lambda: np.array(
        [2810.0, 2810.0, 0.0, 150.0, 0.0, 150.0]))
    bp: np.ndarray = field(default_factory=lambda: np.array(
        [560.0, 560.0, 0.0, 30.0, 0.0, 30.0]))
    # the per-joint floor doubles as the failsafe stiffness: with the
    # cross terms dead, the diagonal terms alone must hold pushes
    k0: float = 600.0     # N*m/rad nominal nullspace stiffness (per joint)
    # kept light: with both feet planted the apparent nullspace motions are
    # the constrained squat itself, so heavy damping here drags against
    # the human-led descent
    b0: float = 1.0       # N*m*s/rad nominal nullspace damping

    def __post_init__(self):
        self.kp = np.asarray(self.kp, dtype=float)
        self.bp = np.asarray(self.bp, dtype=float)
        if np.any(self.kp < 0) or np.any(self.bp < 0):
            raise ValueError("task gains must be non-negative")
        if self.k0 <= 0 or self.b0 <= 0:
            raise ValueError("joint gain floors must be positive")

    def masked(self, pair: ProjectionPair):
        """(Kp, Bp) as 6x6 matrices with open-loop rows/columns zeroed."""
        keep = ~pair.open_mask
        Kp = np.diag(np.where(keep, np.asarray(self.kp, dtype=float), 0.0))
        Bp = np.diag(np.where(keep, np.asarray(self.bp, dtype=float), 0.0))
        return Kp, Bp


@dataclass
class CentralOutput:
    """One controller tick: per-joint servo commands plus the cross terms.

    The per-joint slice (q_ref, k, b, tau_ff) is everything a servo needs
    to run standalone; tau_cross is the centrally computed coupling torque
    that may be dropped on communication loss.
    """

    t: float
    seq: int
    q_ref: np.ndarray       # (12,) rad
    k: np.ndarray           # (12,) N*m/rad, diagonal stiffness
    b: np.ndarray           # (12,) N*m*s/rad, diagonal damping
    tau_ff: np.ndarray      # (12,) N*m feedforward
    tau_cross: np.ndarray   # (12,) N*m cross-coupling torque
    ik_ok: bool = True
    gain_fallback: bool = False


class CentralController:
    """Computes per-joint commands from task-space measurements.

    Owns no servo state; each tick emits an immutable message.  On IK
    failure the previous reference is held and flagged.
    """

    def __init__(self, params: RobotParams, gains: GainConfig | None = None,
                 pair: ProjectionPair | None = None, p_c_cmd=None,
                 f_assist: float = 0.0, rate_hz: float = 100.0):
        self.params = params
        self.gains = gains or GainConfig()
        self.pair = pair or ProjectionPair()
        self.p_c_cmd = np.zeros(6) if p_c_cmd is None else np.asarray(p_c_cmd, dtype=float)
        if np.any(self.p_c_cmd[self.pair.open_mask] != 0.0):
            raise CommandInOpenLoopSubspace("balance command must lie in the "
                                            "closed-loop directions")
        self.f_assist = float(f_assist)
        self.rate_hz = float(rate_hz)
        self.period = 1.0 / self.rate_hz
        self._seq = 0
        self._last_q_ref = None
        self.last_p_ref = np.zeros(6)

    def tick(self, p_meas, pd_meas, q, qd, t: float) -> CentralOutput:
        p_meas = np.asarray(p_meas, dtype=float)
        pd_meas = np.asarray(pd_meas, dtype=float)
        q = np.asarray(q, dtype=float)
        qd = np.asarray(qd, dtype=float)
        mask = self.pair.open_mask

        p_ref = build_reference(self.p_c_cmd, p_meas, self.pair)
        self.last_p_ref = p_ref
        # human-led directions follow the measured rate so damping cannot
        # fight the operator; closed-loop setpoints are constant
        pd_ref = np.where(mask, pd_meas, 0.0)

        ik_ok = True
        try:
            q_ref = inverse_kinematics(p_ref, q, self.params)
        except NoConvergence:
            ik_ok = False
            q_ref = self._last_q_ref if self._last_q_ref is not None else q.copy()
        self._last_q_ref = q_ref

        J = model.jacobian(q, self.params)
        H = model.hessian(q, self.params)
        Kp, Bp = self.gains.masked(self.pair)
        w_ff = feedforward_wrench(self.params, self.f_assist)
        F = task_wrench(p_ref, p_meas, pd_ref, pd_meas, Kp, Bp, w_ff)

        gain_fallback = False
        try:
            K_q = joint_stiffness(J, H, F, Kp, self.gains.k0)
        except GainIndefinite:
            gain_fallback = True
            N = model.nullspace_projector(J)
            K_q = J.T @ Kp @ J + N @ np.diag(np.full(model.N_JOINTS, self.gains.k0))
        B_q = joint_damping(J, Bp, self.gains.b0)

        k = np.diag(K_q).copy()
        b = np.diag(B_q).copy()
        tau_ff = feedforward_torques(J, w_ff)
        e_q = q_ref - q
        tau_cross = ((K_q - np.diag(k)) @ e_q + (B_q - np.diag(b)) @ (-qd))

        out = CentralOutput(t=t, seq=self._seq, q_ref=q_ref, k=k, b=b,
                            tau_ff=tau_ff, tau_cross=tau_cross,
                            ik_ok=ik_ok, gain_fallback=gain_fallback)
        self._seq += 1
        return out
