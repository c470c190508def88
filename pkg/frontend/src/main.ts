// Operator console: connects to the simulator bridge, renders live charts
// and the stick figure, and sends steering commands.  Pure view/controller:
// nothing here simulates; a stalled stream freezes the view with a badge.

import { Charts } from "./charts.js";
import { CommandTracker, FrameBuffer, isStale } from "./session.js";
import { StickFigure } from "./stick.js";
import {
  CommandKind,
  isAck,
  isTelemetry,
  PROTOCOL_VERSION,
  validateCommand,
} from "./types.js";

const $ = (id: string) => document.getElementById(id)!;

const params = new URLSearchParams(location.search);
const WS_URL = params.get("ws") ?? "ws://127.0.0.1:8765";

const buffer = new FrameBuffer();
const tracker = new CommandTracker(`console-${Math.random().toString(36).slice(2, 8)}`);
let socket: WebSocket | null = null;
let lastArrival: number | null = null;

const charts = new Charts($("charts") as HTMLCanvasElement);
const stick = new StickFigure($("stick") as HTMLCanvasElement);

function setBadge(id: string, on: boolean, text?: string) {
  const el = $(id);
  el.classList.toggle("on", on);
  if (text !== undefined) el.textContent = text;
}

function showError(text: string) {
  const el = $("error");
  el.textContent = text;
  if (text) {
    setTimeout(() => {
      if (el.textContent === text) el.textContent = "";
    }, 4000);
  }
}

function send(kind: CommandKind, value: number, control?: HTMLButtonElement) {
  const problem = validateCommand(kind, value);
  if (problem) {
    showError(problem);
    return;
  }
  if (!socket || socket.readyState !== WebSocket.OPEN) {
    showError("not connected");
    return;
  }
  const seq = tracker.next(kind, performance.now());
  socket.send(JSON.stringify({
    v: PROTOCOL_VERSION, type: "command", kind, value,
    client_id: tracker.clientId, seq,
  }));
  if (control) {
    control.disabled = true;
    const release = () => { control.disabled = false; };
    pendingReleases.set(seq, release);
    setTimeout(() => { if (pendingReleases.delete(seq)) release(); }, 1000);
  }
}

const pendingReleases = new Map<number, () => void>();

function connect() {
  setBadge("conn", false, "connecting");
  socket = new WebSocket(WS_URL);
  socket.onopen = () => setBadge("conn", true, "connected");
  socket.onclose = () => {
    setBadge("conn", false, "disconnected");
    setTimeout(connect, 1000);
  };
  socket.onmessage = (ev) => {
    let msg: unknown;
    try {
      msg = JSON.parse(ev.data as string);
    } catch {
      return;
    }
    if (isTelemetry(msg)) {
      lastArrival = performance.now();
      if (msg.p.length === 6) buffer.push(msg);
      return;
    }
    if (isAck(msg)) {
      tracker.ack(msg.seq);
      const release = pendingReleases.get(msg.seq);
      if (release) {
        pendingReleases.delete(msg.seq);
        release();
      }
      if (!msg.ok) showError(msg.error ?? "command rejected");
    }
  };
}

function redraw() {
  const stale = isStale(lastArrival, performance.now());
  setBadge("stale", stale, "STALE");
  const latest = buffer.latest;
  if (latest) {
    charts.render(buffer.all, buffer.killTimes);
    stick.render(latest.q, latest.p);
    setBadge("link", latest.link_alive,
             latest.link_alive ? "LINK ALIVE" : "LINK DEAD");
    $("tlabel").textContent = `t = ${latest.t.toFixed(2)} s`;
    const f = latest.flags;
    $("status").textContent =
      `ik ${f.ik_ok === false ? "HOLD" : "ok"}` +
      `${f.gain_fallback ? " | gain fallback" : ""}` +
      `${f.paused ? " | paused" : ""}`;
  }
  requestAnimationFrame(redraw);
}

function bindSlider(id: string, kind: CommandKind) {
  const input = $(id) as HTMLInputElement;
  const label = $(id + "-val");
  const update = () => { label.textContent = input.value; };
  input.addEventListener("input", update);
  input.addEventListener("change", () => send(kind, parseFloat(input.value)));
  update();
}

window.addEventListener("load", () => {
  bindSlider("z-slider", "set_operator_z");
  bindSlider("theta-slider", "set_operator_theta");
  bindSlider("assist-slider", "set_assist_force");
  ($("kill") as HTMLButtonElement).onclick = (e) =>
    send("kill_comms", 0, e.target as HTMLButtonElement);
  ($("restore") as HTMLButtonElement).onclick = (e) =>
    send("restore_comms", 0, e.target as HTMLButtonElement);
  ($("push") as HTMLButtonElement).onclick = (e) =>
    send("push_x", 50, e.target as HTMLButtonElement);
  ($("pause") as HTMLButtonElement).onclick = (e) =>
    send("pause", 0, e.target as HTMLButtonElement);
  ($("resume") as HTMLButtonElement).onclick = (e) =>
    send("resume", 0, e.target as HTMLButtonElement);
  ($("reset") as HTMLButtonElement).onclick = (e) =>
    send("reset", 0, e.target as HTMLButtonElement);
  connect();
  requestAnimationFrame(redraw);
});
