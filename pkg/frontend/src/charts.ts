// Six stacked time-series strips on one canvas (x, y, z, roll, pitch,
// yaw) over the ring-buffer window, with a vertical rule at each
// communications-kill instant.

import { TelemetryFrame } from "./types.js";

const LABELS = ["x [m]", "y [m]", "z [m]", "roll [rad]", "pitch [rad]", "yaw [rad]"];
const TRACE = "#4da3ff";
const RULE = "#e05555";
const GRID = "#2c3440";
const TEXT = "#9fb0c0";

export interface StripSample {
  t: number;
  value: number;
}

/** Pixel-ready polyline for one coordinate over a time window. */
export function stripPolyline(
  frames: readonly TelemetryFrame[], coord: number,
  t0: number, t1: number, w: number, h: number,
): { points: [number, number][]; lo: number; hi: number } {
  let lo = Infinity, hi = -Infinity;
  for (const f of frames) {
    const v = f.p[coord];
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (!(hi > lo)) {
    const mid = Number.isFinite(lo) ? lo : 0;
    lo = mid - 1e-3;
    hi = mid + 1e-3;
  }
  const pad = 0.08 * (hi - lo);
  lo -= pad;
  hi += pad;
  const span = Math.max(t1 - t0, 1e-9);
  const points: [number, number][] = frames.map((f) => [
    ((f.t - t0) / span) * w,
    h - ((f.p[coord] - lo) / (hi - lo)) * h,
  ]);
  return { points, lo, hi };
}

export class Charts {
  private ctx: CanvasRenderingContext2D;

  constructor(private canvas: HTMLCanvasElement) {
    const ctx = canvas.getContext("2d");
    if (!ctx) throw new Error("no 2d context");
    this.ctx = ctx;
  }

  render(frames: readonly TelemetryFrame[], killTimes: number[]) {
    const { width: W, height: H } = this.canvas;
    const ctx = this.ctx;
    ctx.clearRect(0, 0, W, H);
    if (frames.length < 2) return;
    const t0 = frames[0].t;
    const t1 = frames[frames.length - 1].t;
    const stripH = Math.floor(H / 6);
    for (let c = 0; c < 6; c++) {
      const yOff = c * stripH;
      ctx.save();
      ctx.translate(0, yOff);
      ctx.strokeStyle = GRID;
      ctx.strokeRect(0.5, 0.5, W - 1, stripH - 1);
      const { points, lo, hi } = stripPolyline(frames, c, t0, t1, W, stripH - 6);
      ctx.strokeStyle = TRACE;
      ctx.beginPath();
      points.forEach(([x, y], i) =>
        i === 0 ? ctx.moveTo(x, y + 3) : ctx.lineTo(x, y + 3));
      ctx.stroke();
      ctx.fillStyle = TEXT;
      ctx.font = "10px monospace";
      ctx.fillText(
        `${LABELS[c]}  [${lo.toFixed(3)}, ${hi.toFixed(3)}]`, 4, 12);
      ctx.restore();
    }
    // kill markers span all strips
    ctx.strokeStyle = RULE;
    for (const tk of killTimes) {
      if (tk < t0 || tk > t1) continue;
      const x = ((tk - t0) / Math.max(t1 - t0, 1e-9)) * W;
      ctx.beginPath();
      ctx.moveTo(x, 0);
      ctx.lineTo(x, H);
      ctx.stroke();
    }
  }
}
