import { describe, expect, it } from "vitest";

import { mechanismPoints } from "../src/legfk.js";
import { ACK_TIMEOUT_MS, CommandTracker, FrameBuffer, isStale } from "../src/session.js";
import { stripPolyline } from "../src/charts.js";
import { isTelemetry, PROTOCOL_VERSION, validateCommand } from "../src/types.js";
import type { TelemetryFrame } from "../src/types.js";

function frame(t: number, z = 0.9, link = true): TelemetryFrame {
  return {
    v: PROTOCOL_VERSION, type: "telemetry", t,
    p: [0, 0, z, 0, 0, 0], p_ref: [0, 0, z, 0, 0, 0],
    q: new Array(12).fill(0), tau: new Array(12).fill(0),
    f_op: [0, 0, 0, 0, 0, 0], link_alive: link, flags: {},
  };
}

describe("frame buffer", () => {
  it("keeps frames time-ordered and drops stragglers", () => {
    const b = new FrameBuffer();
    expect(b.push(frame(1.0))).toBe(true);
    expect(b.push(frame(2.0))).toBe(true);
    expect(b.push(frame(1.5))).toBe(false);   // never reorder
    expect(b.all.map((f) => f.t)).toEqual([1.0, 2.0]);
  });

  it("evicts frames older than the 60 s window", () => {
    const b = new FrameBuffer();
    for (let t = 0; t <= 100; t += 1) b.push(frame(t));
    expect(b.all[0].t).toBeGreaterThanOrEqual(40);
    expect(b.latest!.t).toBe(100);
  });

  it("records the communications-kill instants", () => {
    const b = new FrameBuffer();
    b.push(frame(1, 0.9, true));
    b.push(frame(2, 0.9, true));
    b.push(frame(3, 0.9, false));
    b.push(frame(4, 0.9, false));
    b.push(frame(5, 0.9, true));
    b.push(frame(6, 0.9, false));
    expect(b.killTimes).toEqual([3, 6]);
  });
});

describe("command tracker", () => {
  it("issues monotone sequences and resolves acks", () => {
    const tr = new CommandTracker("c1");
    const s1 = tr.next("set_operator_z", 0);
    const s2 = tr.next("kill_comms", 10);
    expect(s2).toBe(s1 + 1);
    expect(tr.inFlight).toBe(2);
    expect(tr.ack(s1)?.kind).toBe("set_operator_z");
    expect(tr.inFlight).toBe(1);
  });

  it("expires commands that never got an ack", () => {
    const tr = new CommandTracker("c1");
    tr.next("pause", 0);
    expect(tr.expire(ACK_TIMEOUT_MS - 1)).toHaveLength(0);
    expect(tr.expire(ACK_TIMEOUT_MS + 1)).toHaveLength(1);
    expect(tr.inFlight).toBe(0);
  });
});

describe("staleness", () => {
  it("flags a quiet stream after one second", () => {
    expect(isStale(null, 0)).toBe(true);
    expect(isStale(1000, 1900)).toBe(false);
    expect(isStale(1000, 2100)).toBe(true);
  });
});

describe("client-side validation mirrors the server", () => {
  it("accepts in-range and rejects out-of-range values", () => {
    expect(validateCommand("set_operator_z", 0.55)).toBeNull();
    expect(validateCommand("set_operator_z", 5.0)).toMatch(/outside/);
    expect(validateCommand("set_operator_theta", -0.2)).toBeNull();
    expect(validateCommand("kill_comms", 0)).toBeNull();
    expect(validateCommand("set_assist_force", NaN)).toMatch(/not a number/);
  });
});

describe("schema guards", () => {
  it("only passes versioned telemetry", () => {
    expect(isTelemetry(frame(0))).toBe(true);
    expect(isTelemetry({ ...frame(0), v: 99 })).toBe(false);
    expect(isTelemetry({ type: "ack" })).toBe(false);
  });
});

describe("leg forward kinematics (golden from the simulator)", () => {
  it("reproduces the mid-squat frontal bow joint points", () => {
    const q = [-0.2437924875, 0.0, 1.4418316701, 0.0, -1.1980391826, 0.0,
               0.2437924875, 0.0, -1.4418316701, 0.0, 1.1980391826, 0.0];
    const pts = mechanismPoints(q);
    const close = (a: number[], b: number[]) =>
      a.every((x, i) => Math.abs(x - b[i]) < 1e-8);
    expect(close(pts.right.knee, [0.0, -0.5944848515, 0.9985719631])).toBe(true);
    expect(close(pts.left.knee, [0.0, 0.5944848515, 0.9985719631])).toBe(true);
    expect(close(pts.torso, [0.0, 0.0, 1.0957])).toBe(true);
    expect(close(pts.right.ankle, [0, -0.3461, 0])).toBe(true);
  });
});

describe("chart math", () => {
  it("maps frames to pixel columns over the window", () => {
    const frames = [frame(0, 0.9), frame(5, 0.8), frame(10, 0.7)];
    const { points, lo, hi } = stripPolyline(frames, 2, 0, 10, 100, 50);
    expect(points).toHaveLength(3);
    expect(points[0][0]).toBe(0);
    expect(points[2][0]).toBe(100);
    expect(lo).toBeLessThan(0.7);
    expect(hi).toBeGreaterThan(0.9);
    // z decreasing means pixel y increasing (canvas grows downward)
    expect(points[0][1]).toBeLessThan(points[2][1]);
  });

  it("degenerate flat input still yields a finite band", () => {
    const frames = [frame(0, 0.9), frame(1, 0.9)];
    const { lo, hi } = stripPolyline(frames, 2, 0, 1, 100, 50);
    expect(hi).toBeGreaterThan(lo);
  });
});
