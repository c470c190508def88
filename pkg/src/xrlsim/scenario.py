"""Scenario runner: wires model, controller, servos, and dynamics into a
reproducible co-simulation, and parses the plain-text config format.

Config files are UTF-8 text, one ``section.key = value`` per line, ``#``
comments.  Unknown keys are errors.  An empty file runs the default
scenario: the operator leads a squat descent, communications die at 10 s,
and a lateral push tests the failsafe at 12 s.  See docs/config.md for
the full schema.
"""

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import model
from .controller import CentralController, GainConfig, ProjectionPair
from .dynamics import (
    OperatorModel,
    OutOfReach,
    QuinticTrack,
    SimState,
    SingularMass,
    Simulator,
    frontal_bow_seed,
    operator_wrench,
    standing_pose,
)
from .params import RobotParams
from .servo import Channel, ChannelConfig, ServoNetwork

__all__ = [
    "ConfigError",
    "PushEvent",
    "ScenarioConfig",
    "ScenarioRunner",
    "Summary",
    "parse_config",
    "run",
]

TRACE_COLUMNS = (
    ["t"]
    + [f"u_{n}" for n in ("x", "y", "z", "roll", "pitch", "yaw")]
    + [f"ud_{n}" for n in ("x", "y", "z", "roll", "pitch", "yaw")]
    + [f"p_{n}" for n in ("x", "y", "z", "roll", "pitch", "yaw")]
    + [f"q_{n}" for n in model.JOINT_NAMES]
    + [f"tau_{n}" for n in model.JOINT_NAMES]
    + [f"fop_{n}" for n in ("x", "y", "z", "roll", "pitch", "yaw")]
    + ["link_alive"]
)


class ConfigError(ValueError):
    """Malformed or unknown configuration input."""


@dataclass
class PushEvent:
    t: float
    axis: int          # 0 = x, 1 = y (torso frame force)
    impulse: float     # N*s
    duration: float    # s


@dataclass
class ScenarioConfig:
    robot: RobotParams = field(default_factory=RobotParams)
    gains: GainConfig = field(default_factory=GainConfig)
    s_diag: tuple = (0.0, 0.0, 1.0, 0.0, 1.0, 0.0)
    command: tuple = (0.0,) * 6      # closed-loop pose setpoint
    assist: float = 0.0              # N upward assist actually applied
    rate_hz: float = 100.0
    channel: ChannelConfig = field(default_factory=lambda: ChannelConfig(kill_at=10.0))
    tau_max: float = 115.6
    stale_periods: float = 2.0
    # operator
    op_z_start: float | None = None  # None: measured COM height at start
    op_z_end: float = 0.55
    op_descent_start: float = 0.0
    op_descent_duration: float = 8.0
    op_theta: float = 0.0
    op_k_z: float = 2000.0
    op_b_z: float = 200.0
    op_k_theta: float = 150.0
    op_b_theta: float = 15.0
    op_f_max: float = 400.0
    # simulation
    duration: float = 22.0
    dt: float = 1e-3
    seed: int = 1
    start_flex: float = 0.05     # m the torso starts below full extension
    noise_q: float = 0.0
    noise_qd: float = 0.0
    # events
    pushes: list = field(default_factory=lambda: [PushEvent(12.0, 1, 50.0, 3.0)])
    kill_times: list = field(default_factory=list)
    restore_times: list = field(default_factory=list)
    assist_changes: list = field(default_factory=list)   # (t, value)
    # outputs and verdicts
    trace_path: str | None = None
    xy_max: float = 0.02
    rollyaw_max_deg: float = 2.0
    z_track_max: float = 0.05
    settle_tol: float = 0.05
    # bridge
    host: str = "127.0.0.1"
    port: int = 8765
    telemetry_hz: float = 20.0


def _parse_floats(value, n, where):
    parts = value.split()
    if len(parts) != n:
        raise ConfigError(f"{where}: expected {n} numbers, got {len(parts)}")
    try:
        return tuple(float(x) for x in parts)
    except ValueError as e:
        raise ConfigError(f"{where}: {e}") from None


def _one_float(value, where):
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{where}: not a number: {value!r}") from None


_ROBOT_KEYS = {
    "m_act", "m_batt", "m_pl", "l1", "l2", "w_hip", "w_base",
    "l_foot", "w_foot", "g", "tau_ankle_max", "f_assist",
}


def parse_config(text: str) -> ScenarioConfig:
    """Strict parse of the key-value scenario format."""
    cfg = ScenarioConfig()
    robot_kw = {}
    gains_kw = {}
    channel_kw = {}
    pushes = []
    kill_times, restore_times, assist_changes = [], [], []
    saw_event_key = False

    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        where = f"line {lineno} ({key})"

        if key.startswith("robot."):
            sub = key[6:]
            if sub == "torso_inertia":
                robot_kw[sub] = _parse_floats(value, 3, where)
            elif sub in _ROBOT_KEYS:
                robot_kw[sub] = _one_float(value, where)
            else:
                raise ConfigError(f"{where}: unknown robot parameter")
        elif key == "gains.kp":
            gains_kw["kp"] = np.array(_parse_floats(value, 6, where))
        elif key == "gains.bp":
            gains_kw["bp"] = np.array(_parse_floats(value, 6, where))
        elif key == "gains.k0":
            gains_kw["k0"] = _one_float(value, where)
        elif key == "gains.b0":
            gains_kw["b0"] = _one_float(value, where)
        elif key == "control.s_diag":
            cfg.s_diag = _parse_floats(value, 6, where)
        elif key == "control.command":
            cfg.command = _parse_floats(value, 6, where)
        elif key == "control.assist":
            cfg.assist = _one_float(value, where)
        elif key == "control.rate_hz":
            cfg.rate_hz = _one_float(value, where)
        elif key == "channel.period":
            channel_kw["period"] = _one_float(value, where)
        elif key == "channel.delay":
            channel_kw["delay"] = _one_float(value, where)
        elif key == "channel.drop_prob":
            channel_kw["drop_prob"] = _one_float(value, where)
        elif key == "channel.kill_at":
            channel_kw["kill_at"] = (None if value in ("off", "none", "")
                                     else _one_float(value, where))
        elif key == "channel.seed":
            channel_kw["rng_seed"] = int(_one_float(value, where))
        elif key == "servo.tau_max":
            cfg.tau_max = _one_float(value, where)
        elif key == "servo.stale_periods":
            cfg.stale_periods = _one_float(value, where)
        elif key == "operator.z_start":
            cfg.op_z_start = (None if value == "auto"
                              else _one_float(value, where))
        elif key == "operator.z_end":
            cfg.op_z_end = _one_float(value, where)
        elif key == "operator.descent_start":
            cfg.op_descent_start = _one_float(value, where)
        elif key == "operator.descent_duration":
            cfg.op_descent_duration = _one_float(value, where)
        elif key == "operator.theta":
            cfg.op_theta = _one_float(value, where)
        elif key == "operator.k_z":
            cfg.op_k_z = _one_float(value, where)
        elif key == "operator.b_z":
            cfg.op_b_z = _one_float(value, where)
        elif key == "operator.k_theta":
            cfg.op_k_theta = _one_float(value, where)
        elif key == "operator.b_theta":
            cfg.op_b_theta = _one_float(value, where)
        elif key == "operator.f_max":
            cfg.op_f_max = _one_float(value, where)
        elif key == "sim.duration":
            cfg.duration = _one_float(value, where)
        elif key == "sim.dt":
            cfg.dt = _one_float(value, where)
        elif key == "sim.seed":
            cfg.seed = int(_one_float(value, where))
        elif key == "sim.start_flex":
            cfg.start_flex = _one_float(value, where)
        elif key == "noise.q_std":
            cfg.noise_q = _one_float(value, where)
        elif key == "noise.qd_std":
            cfg.noise_qd = _one_float(value, where)
        elif key in ("event.push_x", "event.push_y"):
            saw_event_key = True
            parts = value.split()
            if len(parts) not in (2, 3):
                raise ConfigError(f"{where}: expected 't impulse [duration]'")
            t0, imp = float(parts[0]), float(parts[1])
            dur = float(parts[2]) if len(parts) == 3 else 3.0
            if dur <= 0:
                raise ConfigError(f"{where}: push duration must be > 0")
            pushes.append(PushEvent(t0, 0 if key.endswith("x") else 1, imp, dur))
        elif key == "event.kill":
            saw_event_key = True
            kill_times.append(_one_float(value, where))
        elif key == "event.restore":
            saw_event_key = True
            restore_times.append(_one_float(value, where))
        elif key == "event.assist":
            saw_event_key = True
            assist_changes.append(tuple(_parse_floats(value, 2, where)))
        elif key == "event.none":
            saw_event_key = True
        elif key == "output.trace":
            cfg.trace_path = value or None
        elif key == "verdict.xy_max":
            cfg.xy_max = _one_float(value, where)
        elif key == "verdict.rollyaw_max_deg":
            cfg.rollyaw_max_deg = _one_float(value, where)
        elif key == "verdict.z_track_max":
            cfg.z_track_max = _one_float(value, where)
        elif key == "verdict.settle_tol":
            cfg.settle_tol = _one_float(value, where)
        elif key == "bridge.host":
            cfg.host = value
        elif key == "bridge.port":
            cfg.port = int(_one_float(value, where))
        elif key == "bridge.telemetry_hz":
            cfg.telemetry_hz = _one_float(value, where)
        else:
            raise ConfigError(f"{where}: unknown key")

    try:
        if robot_kw:
            cfg.robot = RobotParams(**{**_robot_defaults(), **robot_kw})
        if gains_kw:
            cfg.gains = GainConfig(**{**_gain_defaults(), **gains_kw})
        if channel_kw:
            base = {"period": 0.01, "delay": 0.0, "drop_prob": 0.0,
                    "kill_at": 10.0, "rng_seed": 1}
            base.update(channel_kw)
            cfg.channel = ChannelConfig(**base)
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e)) from None

    if saw_event_key:
        cfg.pushes = pushes
        cfg.kill_times = kill_times
        cfg.restore_times = restore_times
        cfg.assist_changes = assist_changes
    if cfg.duration < 0 or cfg.dt <= 0:
        raise ConfigError("sim.duration must be >= 0 and sim.dt > 0")
    if cfg.rate_hz <= 0 or cfg.telemetry_hz <= 0:
        raise ConfigError("control.rate_hz and bridge.telemetry_hz must be > 0")
    for seq in (cfg.pushes,):
        seq.sort(key=lambda e: e.t)
    cfg.kill_times.sort()
    cfg.restore_times.sort()
    cfg.assist_changes.sort()
    return cfg


def _robot_defaults():
    d = RobotParams()
    return {k: getattr(d, k) for k in (*_ROBOT_KEYS, "torso_inertia")}


def _gain_defaults():
    g = GainConfig()
    return {"kp": g.kp, "bp": g.bp, "k0": g.k0, "b0": g.b0}


def load_config(path: str) -> ScenarioConfig:
    try:
        with open(path, encoding="utf-8") as f:
            return parse_config(f.read())
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from None


@dataclass
class Summary:
    verdict: str                 # STABLE / UNSTABLE / PASS (empty runs)
    duration: float
    ticks: int
    max_abs_x: float
    max_abs_y: float
    max_abs_roll_deg: float
    max_abs_yaw_deg: float
    z_track_err: float           # max |z_com - z_intent| during descent
    kill_time: float | None
    settle_err: float | None     # distance from pre-kill equilibrium at end
    saturation_count: int
    abort_reason: str | None = None
    abort_tick: int | None = None

    def to_text(self) -> str:
        lines = [
            f"verdict           {self.verdict}",
            f"simulated         {self.duration:.3f} s ({self.ticks} ticks)",
            f"max |x_com|       {self.max_abs_x:.4f} m",
            f"max |y_com|       {self.max_abs_y:.4f} m",
            f"max |roll|        {self.max_abs_roll_deg:.3f} deg",
            f"max |yaw|         {self.max_abs_yaw_deg:.3f} deg",
            f"z tracking error  {self.z_track_err:.4f} m",
            f"torque saturation {self.saturation_count} servo ticks",
        ]
        if self.kill_time is not None:
            lines.insert(2, f"comm kill at      {self.kill_time:.3f} s")
            settle = ("n/a" if self.settle_err is None
                      else f"{self.settle_err:.4f} m")
            lines.append(f"settle error      {settle}")
        if self.abort_reason:
            lines.append(f"aborted           tick {self.abort_tick}: {self.abort_reason}")
        return "\n".join(lines)

    def to_json(self) -> str:
        from dataclasses import asdict
        return json.dumps(asdict(self), indent=2, sort_keys=True)


class ScenarioRunner:
    """Deterministic fixed-step co-simulation of one scenario.

    Physics and servos step at 1/dt; the central controller runs every
    channel period.  ``command_source`` (if given) is drained at each
    central tick and may inject operator/channel commands; ``on_sample``
    sees every physics step (the bridge decimates it for telemetry);
    ``central_hook`` sees every central tick (used by the acceptance
    suite).  The runner itself is transport-agnostic and never blocks.
    """

    def __init__(self, cfg: ScenarioConfig, command_source=None,
                 on_sample=None, central_hook=None):
        self.cfg = cfg
        self.command_source = command_source
        self.on_sample = on_sample
        self.central_hook = central_hook
        self.sim = Simulator(cfg.robot)
        self.rng = np.random.default_rng(cfg.seed)

        u0 = standing_pose(cfg.robot)
        u0[2] -= max(cfg.start_flex, self.sim.START_SETTLE)
        seed0 = frontal_bow_seed(cfg.robot, u0[2])
        self._state0 = self.sim.initial_state(u0, seed0)

        z0 = cfg.op_z_start
        if z0 is None:
            a0 = self.sim.assemble(self._state0.u, self._state0.q,
                                   with_coriolis=False)
            z0 = float(a0.com[2])
        self.operator = OperatorModel(
            z_track=QuinticTrack(z0),
            theta_track=QuinticTrack(cfg.op_theta),
            k_z=cfg.op_k_z, b_z=cfg.op_b_z,
            k_theta=cfg.op_k_theta, b_theta=cfg.op_b_theta,
            f_max=cfg.op_f_max)
        if cfg.op_descent_duration > 0:
            self.operator.z_track.plan(cfg.op_descent_start,
                                       cfg.op_descent_duration, cfg.op_z_end)

        self.controller = CentralController(
            cfg.robot, gains=cfg.gains,
            pair=ProjectionPair(np.array(cfg.s_diag)),
            p_c_cmd=np.array(cfg.command), f_assist=cfg.assist,
            rate_hz=cfg.rate_hz)
        self.channel = Channel(cfg.channel)
        self.net = ServoNetwork(self.channel, cfg.tau_max,
                                stale_periods=cfg.stale_periods)

        # loop state
        self._writer = None
        self._k = 0
        self._n = int(round(cfg.duration / cfg.dt))
        self._central_every = max(1, int(round(self.controller.period / cfg.dt)))
        self._out = None
        self._abort = None          # (reason, tick)
        self._kill_idx = set(int(round(t / cfg.dt)) for t in cfg.kill_times)
        self._restore_idx = set(int(round(t / cfg.dt)) for t in cfg.restore_times)
        self._assist_at = {int(round(t / cfg.dt)): v for t, v in cfg.assist_changes}
        self._metrics = dict(max_x=0.0, max_y=0.0, max_roll=0.0, max_yaw=0.0,
                             z_err=0.0, eq_acc=np.zeros(3), eq_n=0,
                             final_com=None)
        st = self._state0
        self._u, self._ud, self._q_seed = st.u.copy(), st.ud.copy(), st.q

    # -- command surface ------------------------------------------------

    def apply_command(self, kind: str, value: float, t: float):
        """Inject an operator-console command; raises ValueError on junk."""
        if kind == "set_operator_z":
            self.operator.z_track.plan(t, 0.5, float(value))
        elif kind == "set_operator_theta":
            self.operator.theta_track.plan(t, 0.5, float(value))
        elif kind == "set_assist_force":
            self.controller.f_assist = float(value)
        elif kind == "kill_comms":
            self.channel.kill()
        elif kind == "restore_comms":
            self.channel.restore()
        elif kind == "push_x":
            self.cfg.pushes.append(PushEvent(t, 0, float(value), 3.0))
        else:
            raise ValueError(f"unknown command kind: {kind}")

    # -- stepping ---------------------------------------------------------

    @property
    def t(self) -> float:
        return self._k * self.cfg.dt

    @property
    def done(self) -> bool:
        return self._abort is not None or self._k >= self._n

    def step_once(self) -> bool:
        """Advance one physics/servo tick; False once the run is over."""
        if self.done:
            return False
        cfg = self.cfg
        dt = cfg.dt
        k = self._k
        t = k * dt
        u, ud = self._u, self._ud

        try:
            a = self.sim.assemble(u, self._q_seed)
        except (OutOfReach, SingularMass) as e:
            self._abort = (str(e), k)
            return False
        self._q_seed = a.q
        qd = a.G @ ud
        state = SimState(u=u, ud=ud, t=t, q=a.q, qd=qd)
        p_true = np.concatenate([a.com, u[3:]])
        pd_true = a.jac_task @ ud

        if k in self._kill_idx:
            self.channel.kill()
        if k in self._restore_idx:
            self.channel.restore()
        if k in self._assist_at:
            self.controller.f_assist = self._assist_at[k]

        if k % self._central_every == 0:
            if self.command_source is not None:
                for kind, value in self.command_source():
                    self.apply_command(kind, value, t)
            q_m, qd_m, p_m, pd_m = self._measure(a, qd, p_true, pd_true)
            self._out = self.controller.tick(p_m, pd_m, q_m, qd_m, t)
            if k == 0:
                self.net.bootstrap(self._out, t)
            self.channel.send(self._out, t)
            if self.central_hook is not None:
                self.central_hook(t, p_m, pd_m, self._out, self.controller)

        self.net.deliver(t)
        link = self.net.link_alive(t)
        tau = self.net.tick_all(t, a.q, qd)
        f_op = operator_wrench(t, p_true, pd_true, self.operator)
        q_ext = self._push_force(t)

        if self._writer is not None:
            row = np.concatenate([[t], u, ud, p_true, a.q, tau, f_op,
                                  [1.0 if link else 0.0]])
            self._writer.write(",".join(f"{x:.9g}" for x in row) + "\n")
        if self.on_sample is not None:
            self.on_sample(t=t, p=p_true, q=a.q, tau=tau, f_op=f_op,
                           link_alive=link, out=self._out,
                           operator=self.operator)

        try:
            udd, _ = self.sim.generalized_dynamics(state, tau, f_op, q_ext,
                                                   assembled=a)
        except (OutOfReach, SingularMass) as e:
            self._abort = (str(e), k)
            return False

        m = self._metrics
        m["max_x"] = max(m["max_x"], abs(p_true[0]))
        m["max_y"] = max(m["max_y"], abs(p_true[1]))
        m["max_roll"] = max(m["max_roll"], abs(p_true[3]))
        m["max_yaw"] = max(m["max_yaw"], abs(p_true[5]))
        lo = cfg.op_descent_start
        hi = lo + cfg.op_descent_duration
        if lo <= t <= hi:
            m["z_err"] = max(m["z_err"],
                             abs(p_true[2] - self.operator.z_track.eval(t)[0]))
        kill_t = self._kill_time()
        if kill_t is not None and kill_t - 0.5 <= t < kill_t:
            m["eq_acc"] = m["eq_acc"] + a.com
            m["eq_n"] += 1
        m["final_com"] = a.com

        if not np.all(np.isfinite(udd)) or np.linalg.norm(ud) > 20.0:
            self._abort = ("state divergence", k)
            return False

        self._ud = ud + dt * udd
        self._u = u + dt * self._ud
        self._k += 1
        return True

    def attach_trace(self, trace_file):
        """Start writing per-tick rows to an open text file."""
        self._writer = trace_file
        trace_file.write(",".join(TRACE_COLUMNS) + "\n")

    def run(self, trace_file=None) -> Summary:
        if trace_file is not None:
            self.attach_trace(trace_file)
        while self.step_once():
            pass
        return self.finish()

    def finish(self) -> Summary:
        cfg = self.cfg
        m = self._metrics
        kill_t = self._kill_time()
        if self._n == 0:
            return Summary(verdict="PASS", duration=0.0, ticks=0,
                           max_abs_x=0.0, max_abs_y=0.0, max_abs_roll_deg=0.0,
                           max_abs_yaw_deg=0.0, z_track_err=0.0,
                           kill_time=kill_t, settle_err=None,
                           saturation_count=0)
        settle_err = None
        if kill_t is not None and m["eq_n"] > 0 and m["final_com"] is not None:
            eq = m["eq_acc"] / m["eq_n"]
            settle_err = float(np.linalg.norm(m["final_com"] - eq))
        abort_reason, abort_tick = self._abort if self._abort else (None, None)
        bounded = abort_reason is None
        returned = settle_err is None or settle_err <= cfg.settle_tol
        verdict = "STABLE" if bounded and returned else "UNSTABLE"
        return Summary(
            verdict=verdict,
            duration=self._k * cfg.dt,
            ticks=self._k,
            max_abs_x=m["max_x"], max_abs_y=m["max_y"],
            max_abs_roll_deg=math.degrees(m["max_roll"]),
            max_abs_yaw_deg=math.degrees(m["max_yaw"]),
            z_track_err=m["z_err"],
            kill_time=kill_t,
            settle_err=settle_err,
            saturation_count=self.net.saturation_count,
            abort_reason=abort_reason, abort_tick=abort_tick)

    # -- internals ----------------------------------------------------------

    def _measure(self, a, qd, p_true, pd_true):
        cfg = self.cfg
        if cfg.noise_q == 0.0 and cfg.noise_qd == 0.0:
            return a.q, qd, p_true, pd_true
        q_m = a.q + self.rng.uniform(-cfg.noise_q, cfg.noise_q, model.N_JOINTS)
        qd_m = qd + self.rng.uniform(-cfg.noise_qd, cfg.noise_qd, model.N_JOINTS)
        p_m = model.task_pose(q_m, cfg.robot)
        pd_m = model.jacobian(q_m, cfg.robot) @ qd_m
        return q_m, qd_m, p_m, pd_m

    def _push_force(self, t):
        q_ext = None
        for ev in self.cfg.pushes:
            if ev.t <= t < ev.t + ev.duration:
                if q_ext is None:
                    q_ext = np.zeros(6)
                q_ext[ev.axis] += ev.impulse / ev.duration
        return q_ext

    def _kill_time(self):
        times = list(self.cfg.kill_times)
        if self.cfg.channel.kill_at is not None:
            times.append(self.cfg.channel.kill_at)
        return min(times) if times else None


def run(cfg: ScenarioConfig, central_hook=None) -> Summary:
    """Headless run; writes the trace when the config names a path."""
    runner = ScenarioRunner(cfg, central_hook=central_hook)
    if cfg.trace_path:
        with open(cfg.trace_path, "w", encoding="utf-8", newline="\n") as f:
            return runner.run(trace_file=f)
    return runner.run()
