"""Physical constants of the leg mechanism: masses, link lengths, limits."""

from dataclasses import dataclass, fields


@dataclass(frozen=True)
class RobotParams:
    """Geometry and mass properties of the prototype, SI units.

    The mechanism is two legs of three 2-DOF joint modules each (ankle,
    knee, hip), every module carrying one actuator/transmission package of
    mass ``m_act``.  Batteries, payload, and both hip modules ride on the
    torso link, so they are lumped into a single torso point mass.
    """

    m_act: float = 8.73          # kg, one actuator/transmission module
    m_batt: float = 0.9          # kg, one battery (two on the torso)
    m_pl: float = 20.4           # kg, payload (maximum)
    l1: float = 0.2667           # m, proximal link (knee to hip)
    l2: float = 1.0290           # m, distal link (ankle to knee)
    w_hip: float = 0.7747        # m, hip module separation along the torso
    w_base: float = 0.6922       # m, ankle separation along the ground
    l_foot: float = 0.254        # m, foot length (sagittal)
    w_foot: float = 0.127        # m, foot width (frontal)
    g: float = 9.81              # m/s^2
    tau_ankle_max: float = 115.6  # N*m, torque ceiling of one joint module
    f_assist: float = 200.0      # N, upward assist capability (maximum)
    # principal rotational inertia of the torso lump about its center
    # (roll, pitch, yaw).  A literal point torso would leave the pitch row
    # of the generalized mass matrix zero whenever roll = yaw = 0, because
    # pitching is absorbed by the hip sagittal joints without moving any
    # mass point; the payload box is what physically carries that inertia.
    torso_inertia: tuple = (3.0, 0.8, 3.0)  # kg*m^2

    def __post_init__(self):
        for f in ("m_act", "m_batt", "m_pl"):
            if getattr(self, f) < 0:
                raise ValueError(f"{f} must be >= 0, got {getattr(self, f)}")
        for f in ("l1", "l2", "w_hip", "w_base", "l_foot", "w_foot", "g"):
            if getattr(self, f) <= 0:
                raise ValueError(f"{f} must be > 0, got {getattr(self, f)}")
        if self.tau_ankle_max < 0 or self.f_assist < 0:
            raise ValueError("torque and assist limits must be >= 0")
        if len(self.torso_inertia) != 3 or any(i <= 0 for i in self.torso_inertia):
            raise ValueError("torso_inertia must be three positive values")

    @property
    def m_torso(self) -> float:
        """Torso lump: two hip modules, two batteries, and the payload."""
        return 2.0 * self.m_act + 2.0 * self.m_batt + self.m_pl

    @property
    def m_total(self) -> float:
        """Full machine mass: torso lump plus the four knee/ankle modules."""
        return self.m_torso + 4.0 * self.m_act

    @property
    def leg_reach(self) -> float:
        return self.l1 + self.l2

    def replace(self, **kw) -> "RobotParams":
        vals = {f.name: getattr(self, f.name) for f in fields(self)}
        vals.update(kw)
        return RobotParams(**vals)
