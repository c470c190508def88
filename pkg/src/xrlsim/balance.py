"""Static balance margins: lean limits, edge torque, minimum stiffness.

All quantities come from the planar statics of the machine leaning about
a foot edge: the torque available at the ankles bounds the recoverable
lean, the support-polygon edge bounds the allowable lean, and the ratio
of edge torque to edge angle sets the softest ankle stiffness that still
returns the machine to upright from the polygon edge.
"""

import json
import math
from dataclasses import asdict, dataclass

from .params import RobotParams

__all__ = [
    "BalanceReport",
    "analyze",
    "edge_lean_angle",
    "edge_torque",
    "max_lean_angle",
    "min_stiffnesses",
]

# the analysis mass: torso lump plus the two knee modules; the ankle
# modules sit at the pivot and need no support
ANALYSIS_MASS = "top"


def default_z_max(params: RobotParams) -> float:
    """Upper-body COM height approximation: full leg extension."""
    return params.l1 + params.l2


def default_m_tot(params: RobotParams) -> float:
    """Supported mass: everything except the two ankle modules."""
    return params.m_torso + 2.0 * params.m_act


def max_lean_angle(params: RobotParams, z_max: float, m_tot: float):
    """(theta_max, torque_dominates): the lean angle beyond which the two
    ankles can no longer hold the machine, from

        theta_max = asin(2 tau_ankle_max / (m g z)).

    When the available torque exceeds the worst-case gravity moment the
    argument tops 1; theta_max is then pi/2 with the flag set.
    """
    denom = m_tot * params.g * z_max
    if denom <= 0.0:
        return math.pi / 2.0, True
    arg = 2.0 * params.tau_ankle_max / denom
    if arg > 1.0:
        return math.pi / 2.0, True
    return math.asin(arg), False


def edge_lean_angle(params: RobotParams, z_max: float,
                    edge_width: str = "w_foot") -> float:
    """Lean angle that puts the COM over the support-polygon edge.

    The edge sits half a foot width from the origin for the frontal-plane
    stance; ``edge_width="l_foot"`` switches to the foot length instead.
    """
    if edge_width not in ("w_foot", "l_foot"):
        raise ValueError("edge_width must be 'w_foot' or 'l_foot'")
    w = params.w_foot if edge_width == "w_foot" else params.l_foot
    return math.atan(w / (2.0 * z_max))


def edge_torque(params: RobotParams, z_max: float, m_tot: float,
                theta_edge: float) -> float:
    """Ankle torque needed to hold the machine leaned to the edge angle."""
    return 0.5 * m_tot * params.g * z_max * math.sin(theta_edge)


def min_stiffnesses(tau_edge: float, theta_edge: float, z_max: float):
    """(per-ankle, body-space) minimum stiffness to recover from the edge:
    K_ank = tau_edge / theta_edge, K_x = 2 K_ank / z_max^2."""
    if theta_edge == 0.0:
        if tau_edge == 0.0:
            return 0.0, 0.0
        raise ZeroDivisionError("edge angle is zero with nonzero edge torque")
    k_ank = tau_edge / theta_edge
    return k_ank, 2.0 * k_ank / (z_max * z_max)


@dataclass
class BalanceReport:
    theta_max: float        # rad, torque-limited lean
    theta_edge: float       # rad, support-polygon lean
    tau_ank_edge: float     # N*m, torque demand at the edge
    k_ank_min: float        # N*m/rad per ankle
    k_x_min: float          # N/m body-space
    k_x_tau_max: float      # N/m body stiffness that applies tau_max at the edge
    z_max: float            # m
    m_tot: float            # kg, supported mass used in the analysis
    m_total_full: float     # kg, full machine mass for reference
    torque_dominates: bool  # theta_max clamped at pi/2
    recoverable: bool       # tau_ank_edge <= tau_ankle_max

    def to_text(self) -> str:
        deg = 180.0 / math.pi
        rows = [
            ("max lean angle (torque limit)",
             f"{self.theta_max:8.4f} rad = {self.theta_max * deg:6.2f} deg"
             + ("  [torque dominates]" if self.torque_dominates else "")),
            ("lean angle to polygon edge",
             f"{self.theta_edge:8.4f} rad = {self.theta_edge * deg:6.2f} deg"),
            ("ankle torque at the edge", f"{self.tau_ank_edge:8.2f} N*m"),
            ("min ankle stiffness", f"{self.k_ank_min:8.2f} N*m/rad"),
            ("min body stiffness", f"{self.k_x_min:8.2f} N/m"),
            ("body stiffness at tau_max", f"{self.k_x_tau_max:8.2f} N/m"),
            ("COM height used", f"{self.z_max:8.4f} m"),
            ("supported mass", f"{self.m_tot:8.2f} kg"),
            ("full machine mass", f"{self.m_total_full:8.2f} kg"),
            ("recoverable from edge", "yes" if self.recoverable else "NO"),
        ]
        width = max(len(r[0]) for r in rows)
        return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def analyze(params: RobotParams, z_max: float | None = None,
            m_tot: float | None = None,
            edge_width: str = "w_foot") -> BalanceReport:
    z = default_z_max(params) if z_max is None else float(z_max)
    m = default_m_tot(params) if m_tot is None else float(m_tot)
    theta_max, dominates = max_lean_angle(params, z, m)
    theta_edge = edge_lean_angle(params, z, edge_width)
    tau_edge = edge_torque(params, z, m, theta_edge)
    k_ank, k_x = min_stiffnesses(tau_edge, theta_edge, z)
    k_x_tau_max = 2.0 * (params.tau_ankle_max / theta_edge) / (z * z)
    return BalanceReport(
        theta_max=theta_max,
        theta_edge=theta_edge,
        tau_ank_edge=tau_edge,
        k_ank_min=k_ank,
        k_x_min=k_x,
        k_x_tau_max=k_x_tau_max,
        z_max=z,
        m_tot=m,
        m_total_full=params.m_total,
        torque_dominates=dominates,
        recoverable=tau_edge <= params.tau_ankle_max,
    )
