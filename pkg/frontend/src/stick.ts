// Dual-plane stick figure: frontal (y-z) and sagittal (x-z) projections of
// the leg mechanism, drawn purely from received joint angles.

import { mechanismPoints, MechanismPoints, Vec3 } from "./legfk.js";

const LEG_R = "#4da3ff";
const LEG_L = "#53d18a";
const TORSO = "#e8c555";
const GROUND = "#3a4450";
const COM = "#e05555";

export class StickFigure {
  private ctx: CanvasRenderingContext2D;

  constructor(private canvas: HTMLCanvasElement) {
    const ctx = canvas.getContext("2d");
    if (!ctx) throw new Error("no 2d context");
    this.ctx = ctx;
  }

  render(q: number[], com: number[]) {
    const pts = mechanismPoints(q);
    const { width: W, height: H } = this.canvas;
    const ctx = this.ctx;
    ctx.clearRect(0, 0, W, H);
    const half = W / 2;
    this.plane(pts, com, 1, 0, half, "frontal (y-z)");     // y horizontal
    ctx.save();
    ctx.translate(half, 0);
    this.plane(pts, com, 0, 0, half, "sagittal (x-z)");    // x horizontal
    ctx.restore();
  }

  private plane(pts: MechanismPoints, com: number[], axis: number,
                x0: number, w: number, label: string) {
    const ctx = this.ctx;
    const H = this.canvas.height;
    const scale = Math.min(w / 1.8, H / 1.6);
    const px = (p: Vec3 | number[]): [number, number] => [
      x0 + w / 2 + p[axis] * scale,
      H - 18 - p[2] * scale,
    ];
    ctx.strokeStyle = GROUND;
    ctx.beginPath();
    ctx.moveTo(x0 + 6, H - 18);
    ctx.lineTo(x0 + w - 6, H - 18);
    ctx.stroke();

    for (const [leg, color] of [[pts.right, LEG_R], [pts.left, LEG_L]] as const) {
      ctx.strokeStyle = color;
      ctx.lineWidth = 3;
      ctx.beginPath();
      const a = px(leg.ankle), k = px(leg.knee), h = px(leg.hip);
      ctx.moveTo(a[0], a[1]);
      ctx.lineTo(k[0], k[1]);
      ctx.lineTo(h[0], h[1]);
      ctx.stroke();
      for (const p of [a, k, h]) {
        ctx.beginPath();
        ctx.arc(p[0], p[1], 3.5, 0, 2 * Math.PI);
        ctx.fillStyle = color;
        ctx.fill();
      }
    }
    ctx.strokeStyle = TORSO;
    ctx.lineWidth = 4;
    const hr = px(pts.right.hip), hl = px(pts.left.hip);
    ctx.beginPath();
    ctx.moveTo(hr[0], hr[1]);
    ctx.lineTo(hl[0], hl[1]);
    ctx.stroke();
    ctx.lineWidth = 1;

    const c = px(com);
    ctx.strokeStyle = COM;
    ctx.beginPath();
    ctx.arc(c[0], c[1], 5, 0, 2 * Math.PI);
    ctx.stroke();

    ctx.fillStyle = "#9fb0c0";
    ctx.font = "11px monospace";
    ctx.fillText(label, x0 + 8, 14);
  }
}
