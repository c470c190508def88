"""Distributed joint servos and the lossy central-to-servo channel.

Each of the twelve joints runs an independent setpoint servo on the last
command it received (zero-order hold): diagonal stiffness and damping plus
the frozen feedforward torque.  The centrally computed cross-coupling
torque is perishable; a servo uses it only while fresh.  The servos never
read each other or any central structure, so the failsafe property is
structural: after a communication loss every joint keeps regulating on
local measurements alone.
"""

from dataclasses import dataclass

import numpy as np

from .controller import CentralOutput

__all__ = [
    "Channel",
    "ChannelConfig",
    "JointServo",
    "ServoNetwork",
    "ServoState",
    "servo_tick",
]


@dataclass
class ChannelConfig:
    period: float = 0.01        # s, central send interval
    delay: float = 0.0          # s, transport latency
    drop_prob: float = 0.0      # per-message loss probability
    kill_at: float | None = None  # s, one-shot permanent disconnect
    rng_seed: int = 1

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError("channel period must be > 0")
        if self.delay < 0:
            raise ValueError("channel delay must be >= 0")
        if not 0.0 <= self.drop_prob <= 1.0:
            raise ValueError("drop_prob must be in [0, 1]")


class Channel:
    """Delayed, lossy, killable broadcast path for controller output.

    Loss draws come from a seeded generator at send time, so a run is
    reproducible.  While dead, queued messages are discarded at their
    delivery time; they do not pile up for a burst on restore.
    """

    def __init__(self, cfg: ChannelConfig):
        self.cfg = cfg
        self._rng = np.random.default_rng(cfg.rng_seed)
        self._in_flight: list[tuple[float, CentralOutput]] = []
        self.killed = False
        self._auto_killed = False

    def send(self, out: CentralOutput, t: float):
        dropped = self._rng.uniform() < self.cfg.drop_prob
        if not dropped:
            self._in_flight.append((t + self.cfg.delay, out))

    def _update_kill(self, t: float):
        if (not self._auto_killed and self.cfg.kill_at is not None
                and t >= self.cfg.kill_at):
            self._auto_killed = True
            self.killed = True

    def kill(self):
        self.killed = True

    def restore(self):
        self.killed = False

    def poll(self, t: float) -> list[CentralOutput]:
        """Messages due by time t, oldest first; empty while dead."""
        self._update_kill(t)
        due = [m for m in self._in_flight if m[0] <= t]
        if not due:
            return []
        self._in_flight = [m for m in self._in_flight if m[0] > t]
        if self.killed:
            return []
        return [m[1] for m in due]


@dataclass
class ServoState:
    """Zero-order-hold command plus reception bookkeeping for one joint."""

    q_ref: float = 0.0
    k: float = 0.0
    b: float = 0.0
    tau_ff: float = 0.0
    tau_cross: float = 0.0
    last_rx: float = -np.inf
    cross_rx: float = -np.inf
    tau_max: float = np.inf
    saturation_count: int = 0


def servo_tick(state: ServoState, q_i: float, qd_i: float,
               tau_cross_i: float) -> float:
    """One joint servo update: stiffness toward the held reference,
    damping toward zero rate, frozen feedforward, plus whatever fresh
    cross torque the caller hands in.  Output clamps to the joint's
    torque ceiling without sign reversal."""
    tau = (state.k * (state.q_ref - q_i) - state.b * qd_i
           + state.tau_ff + tau_cross_i)
    if tau > state.tau_max:
        state.saturation_count += 1
        return state.tau_max
    if tau < -state.tau_max:
        state.saturation_count += 1
        return -state.tau_max
    return tau


class JointServo:
    """One joint's servo: holds its slice of the last received command."""

    def __init__(self, index: int, tau_max: float, stale_after: float):
        self.index = index
        self.stale_after = stale_after
        self.state = ServoState(tau_max=tau_max)

    def install(self, out: CentralOutput, t: float):
        i = self.index
        s = self.state
        s.q_ref = float(out.q_ref[i])
        s.k = float(out.k[i])
        s.b = float(out.b[i])
        s.tau_ff = float(out.tau_ff[i])
        s.tau_cross = float(out.tau_cross[i])
        s.last_rx = t
        s.cross_rx = t

    def link_alive(self, t: float) -> bool:
        return (t - self.state.last_rx) <= self.stale_after

    def tick(self, t: float, q_i: float, qd_i: float) -> float:
        fresh = (t - self.state.cross_rx) <= self.stale_after
        cross = self.state.tau_cross if fresh else 0.0
        return servo_tick(self.state, q_i, qd_i, cross)


class ServoNetwork:
    """The twelve joint servos behind one shared channel.

    Logically concurrent; simulated by a deterministic sweep.  Each servo
    receives only scalars, so relocating them to independent execution
    contexts would change nothing but transport.
    """

    def __init__(self, channel: Channel, tau_max, n: int = 12,
                 stale_periods: float = 2.0):
        tau_max = np.broadcast_to(np.asarray(tau_max, dtype=float), n)
        stale_after = stale_periods * channel.cfg.period
        self.channel = channel
        self.servos = [JointServo(i, tau_max[i], stale_after) for i in range(n)]

    def bootstrap(self, out: CentralOutput, t: float = 0.0):
        """Install the initial command directly, before any motion."""
        for s in self.servos:
            s.install(out, t)

    def deliver(self, t: float):
        for msg in self.channel.poll(t):
            for s in self.servos:
                s.install(msg, t)

    def tick_all(self, t: float, q, qd) -> np.ndarray:
        return np.array([s.tick(t, q[s.index], qd[s.index])
                         for s in self.servos])

    def link_alive(self, t: float) -> bool:
        return self.servos[0].link_alive(t)

    @property
    def saturation_count(self) -> int:
        return sum(s.state.saturation_count for s in self.servos)
