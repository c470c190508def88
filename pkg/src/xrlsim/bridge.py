"""Telemetry/command bridge: exposes a live simulation over a WebSocket.

One JSON object per text message, schema versioned with an integer ``v``
field (see docs/protocol.md).  The simulation loop is the single writer:
it deposits frames into a latest-only cell that client tasks read at
their own pace (slow consumers skip frames, never reorder them), and
commands land in a bounded queue drained at central-controller ticks.
The simulation never blocks on the network side.
"""

import asyncio
import json
import queue
import threading
import time
from dataclasses import asdict, dataclass, field

import numpy as np

PROTOCOL_VERSION = 1

COMMAND_RANGES = {
    "set_operator_z": (0.3, 1.0),        # m
    "set_operator_theta": (-0.5, 0.5),   # rad
    "set_assist_force": (0.0, 250.0),    # N
    "push_x": (-200.0, 200.0),           # N*s
    "kill_comms": None,
    "restore_comms": None,
    "pause": None,
    "resume": None,
    "reset": None,
}

CONTROL_KINDS = {"pause", "resume", "reset"}


class ValidationError(ValueError):
    """Command rejected: unknown kind, bad range, or stale sequence."""


@dataclass
class TelemetryFrame:
    """One decimated state snapshot for the operator console."""

    t: float
    p: list                  # 6 task coordinates
    p_ref: list              # 6 reference coordinates
    q: list                  # 12 joint angles
    tau: list                # 12 joint torques
    f_op: list               # 6 operator wrench
    link_alive: bool
    flags: dict = field(default_factory=dict)
    v: int = PROTOCOL_VERSION
    type: str = "telemetry"

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, text: str) -> "TelemetryFrame":
        d = json.loads(text)
        if d.get("v") != PROTOCOL_VERSION or d.get("type") != "telemetry":
            raise ValidationError("not a telemetry frame of this version")
        d.pop("v"), d.pop("type")
        return cls(**d)


@dataclass
class CommandMessage:
    """An operator-console command; values are range-checked per kind."""

    kind: str
    value: float
    client_id: str
    seq: int
    v: int = PROTOCOL_VERSION
    type: str = "command"

    def validate(self):
        if self.kind not in COMMAND_RANGES:
            raise ValidationError(f"unknown command kind: {self.kind}")
        rng = COMMAND_RANGES[self.kind]
        if rng is not None:
            lo, hi = rng
            if not (isinstance(self.value, (int, float))
                    and np.isfinite(self.value) and lo <= self.value <= hi):
                raise ValidationError(
                    f"{self.kind} value {self.value!r} outside [{lo}, {hi}]")

    @classmethod
    def from_json(cls, text: str) -> "CommandMessage":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ValidationError(f"bad JSON: {e}") from None
        if d.get("v") != PROTOCOL_VERSION:
            raise ValidationError("unsupported protocol version")
        if d.get("type") != "command":
            raise ValidationError(f"unexpected message type {d.get('type')!r}")
        try:
            msg = cls(kind=d["kind"], value=float(d.get("value", 0.0)),
                      client_id=str(d["client_id"]), seq=int(d["seq"]))
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"malformed command: {e}") from None
        msg.validate()
        return msg


class Bridge:
    """Shared state between the simulation thread and the socket server."""

    def __init__(self, max_commands: int = 256):
        self._latest: tuple[int, str] | None = None
        self._frame_seq = 0
        self._commands: queue.Queue = queue.Queue(maxsize=max_commands)
        self._client_seq: dict[str, int] = {}
        self.paused = False
        self.reset_requested = False

    # -- simulation side (never blocks) ------------------------------------

    def publish(self, frame: TelemetryFrame):
        self._frame_seq += 1
        self._latest = (self._frame_seq, frame.to_json())

    def drain_commands(self):
        """All queued (kind, value) pairs, in arrival order."""
        out = []
        while True:
            try:
                out.append(self._commands.get_nowait())
            except queue.Empty:
                return out

    # -- server side ---------------------------------------------------------

    def latest(self):
        return self._latest

    def submit(self, msg: CommandMessage):
        last = self._client_seq.get(msg.client_id)
        if last is not None and msg.seq <= last:
            raise ValidationError(
                f"stale sequence {msg.seq} (last {last}) for {msg.client_id}")
        self._client_seq[msg.client_id] = msg.seq
        if msg.kind == "pause":
            self.paused = True
            return
        if msg.kind == "resume":
            self.paused = False
            return
        if msg.kind == "reset":
            self.reset_requested = True
            self.paused = False
            return
        try:
            self._commands.put_nowait((msg.kind, msg.value))
        except queue.Full:
            raise ValidationError("command queue full") from None


class BridgeServer:
    """WebSocket transport around a Bridge, on its own thread."""

    def __init__(self, bridge: Bridge, host: str = "127.0.0.1",
                 port: int = 8765):
        self.bridge = bridge
        self.host = host
        self.port = port
        self._loop = None
        self._thread = None
        self._stop = None
        self._started = threading.Event()

    async def _client(self, ws):
        bridge = self.bridge
        last_sent = 0

        async def pump_frames():
            nonlocal last_sent
            while True:
                latest = bridge.latest()
                if latest is not None and latest[0] > last_sent:
                    last_sent = latest[0]
                    await ws.send(latest[1])
                await asyncio.sleep(0.01)

        async def pump_commands():
            async for text in ws:
                try:
                    msg = CommandMessage.from_json(text)
                    bridge.submit(msg)
                except ValidationError as e:
                    await ws.send(json.dumps({
                        "v": PROTOCOL_VERSION, "type": "ack", "ok": False,
                        "seq": _maybe_seq(text), "error": str(e)}))
                else:
                    await ws.send(json.dumps({
                        "v": PROTOCOL_VERSION, "type": "ack", "ok": True,
                        "seq": msg.seq}))

        pf = asyncio.create_task(pump_frames())
        try:
            await pump_commands()
        finally:
            pf.cancel()

    async def _main(self):
        import websockets

        self._stop = asyncio.Event()
        async with websockets.serve(self._client, self.host, self.port):
            self._started.set()
            await self._stop.wait()

    def start(self):
        def runner():
            self._loop = asyncio.new_event_loop()
            asyncio.set_event_loop(self._loop)
            try:
                self._loop.run_until_complete(self._main())
            finally:
                self._loop.close()

        self._thread = threading.Thread(target=runner, daemon=True,
                                        name="bridge-server")
        self._thread.start()
        if not self._started.wait(timeout=5.0):
            raise RuntimeError("bridge server failed to start")

    def stop(self):
        if self._loop is not None and self._stop is not None:
            self._loop.call_soon_threadsafe(self._stop.set)
        if self._thread is not None:
            self._thread.join(timeout=5.0)


def _maybe_seq(text):
    try:
        return int(json.loads(text).get("seq", -1))
    except Exception:
        return -1


def make_frame(t, p, p_ref, q, tau, f_op, link_alive, flags) -> TelemetryFrame:
    return TelemetryFrame(
        t=float(t), p=[float(x) for x in p], p_ref=[float(x) for x in p_ref],
        q=[float(x) for x in q], tau=[float(x) for x in tau],
        f_op=[float(x) for x in f_op], link_alive=bool(link_alive),
        flags=flags)


def serve(cfg, wall_pace: bool = True, max_wall_time: float | None = None,
          stop_event: threading.Event | None = None):
    """Run a scenario paced to the wall clock with the bridge attached.

    With zero clients (or stalled ones) the simulation behaves exactly as
    in headless mode: the bridge only ever reads snapshots.  Returns the
    run summary when the scenario ends, the wall-time budget expires, or
    ``stop_event`` is set.
    """
    from .scenario import ScenarioRunner

    bridge = Bridge()
    server = BridgeServer(bridge, cfg.host, cfg.port)
    server.start()

    publish_period = 1.0 / cfg.telemetry_hz      # wall-clock seconds
    pending: list = []

    def command_source():
        out = list(pending)
        pending.clear()
        return out

    state = {"next_pub": 0.0, "runner": None}

    def on_sample(t, p, q, tau, f_op, link_alive, out, operator):
        # decimate against the wall clock: when physics runs slower than
        # real time the console still refreshes at the telemetry rate
        now = time.monotonic()
        if now < state["next_pub"]:
            return
        state["next_pub"] = now + publish_period
        runner = state["runner"]
        flags = {
            "ik_ok": bool(out.ik_ok) if out else True,
            "gain_fallback": bool(out.gain_fallback) if out else False,
            "paused": bridge.paused,
            "operator_z_target": operator.z_track.eval(t)[0],
            "operator_theta_target": operator.theta_track.eval(t)[0],
            "assist": runner.controller.f_assist if runner else 0.0,
            "verdict": "running",
        }
        p_ref = runner.controller.last_p_ref if runner else p
        bridge.publish(make_frame(t, p, p_ref, q, tau, f_op, link_alive, flags))

    def new_runner():
        r = ScenarioRunner(cfg, command_source=command_source,
                           on_sample=on_sample)
        state["runner"] = r
        state["next_pub"] = 0.0
        return r

    runner = new_runner()
    trace_f = None
    if cfg.trace_path:
        trace_f = open(cfg.trace_path, "w", encoding="utf-8", newline="\n")
        runner.attach_trace(trace_f)

    t_wall0 = time.monotonic()
    next_wall = time.monotonic()
    last_heartbeat = 0.0
    try:
        while True:
            if stop_event is not None and stop_event.is_set():
                break
            if max_wall_time is not None and \
                    time.monotonic() - t_wall0 > max_wall_time:
                break
            # control commands apply immediately, even while paused
            for kind, value in bridge.drain_commands():
                pending.append((kind, value))
            if bridge.reset_requested:
                bridge.reset_requested = False
                pending.clear()
                runner = new_runner()
                if trace_f is not None:
                    trace_f.close()
                    trace_f = open(cfg.trace_path, "w", encoding="utf-8",
                                   newline="\n")
                    runner.attach_trace(trace_f)
                next_wall = time.monotonic()
                continue
            if bridge.paused:
                now = time.monotonic()
                if now - last_heartbeat >= 1.0:
                    last_heartbeat = now
                    bridge.publish(TelemetryFrame(
                        t=runner.t, p=[], p_ref=[], q=[], tau=[], f_op=[],
                        link_alive=False,
                        flags={"paused": True, "verdict": "paused"}))
                time.sleep(0.05)
                next_wall = time.monotonic()
                continue
            if not runner.step_once():
                break
            if wall_pace:
                next_wall += cfg.dt
                delay = next_wall - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
                else:
                    # fell behind; don't try to catch up in a burst
                    next_wall = time.monotonic()
    finally:
        if trace_f is not None:
            trace_f.close()
        server.stop()
    return runner.finish()
