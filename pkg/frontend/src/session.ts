// Connection-independent console state: the telemetry ring buffer and the
// pending-command bookkeeping.  No DOM and no sockets here, so all of it
// is unit-testable.

import { TelemetryFrame } from "./types.js";

export const BUFFER_SECONDS = 60;
export const ACK_TIMEOUT_MS = 1000;

export class FrameBuffer {
  private frames: TelemetryFrame[] = [];
  killTimes: number[] = [];
  private lastLink: boolean | null = null;

  push(frame: TelemetryFrame): boolean {
    const last = this.frames[this.frames.length - 1];
    if (last && frame.t <= last.t) {
      return false;              // never reorder; drop stragglers
    }
    if (this.lastLink === true && !frame.link_alive) {
      this.killTimes.push(frame.t);
    }
    this.lastLink = frame.link_alive;
    this.frames.push(frame);
    const cutoff = frame.t - BUFFER_SECONDS;
    let drop = 0;
    while (drop < this.frames.length && this.frames[drop].t < cutoff) drop++;
    if (drop > 0) {
      this.frames.splice(0, drop);
      this.killTimes = this.killTimes.filter((t) => t >= cutoff);
    }
    return true;
  }

  get all(): readonly TelemetryFrame[] {
    return this.frames;
  }

  get latest(): TelemetryFrame | undefined {
    return this.frames[this.frames.length - 1];
  }

  get span(): [number, number] {
    if (this.frames.length === 0) return [0, 1];
    return [this.frames[0].t, this.frames[this.frames.length - 1].t];
  }
}

interface Pending {
  seq: number;
  kind: string;
  sentAt: number;
}

export class CommandTracker {
  readonly clientId: string;
  private seq = 0;
  private pending = new Map<number, Pending>();

  constructor(clientId: string) {
    this.clientId = clientId;
  }

  next(kind: string, now: number): number {
    this.seq += 1;
    this.pending.set(this.seq, { seq: this.seq, kind, sentAt: now });
    return this.seq;
  }

  ack(seq: number): Pending | undefined {
    const p = this.pending.get(seq);
    this.pending.delete(seq);
    return p;
  }

  /** Commands whose ack never arrived within the timeout. */
  expire(now: number): Pending[] {
    const dead: Pending[] = [];
    for (const p of this.pending.values()) {
      if (now - p.sentAt > ACK_TIMEOUT_MS) dead.push(p);
    }
    for (const p of dead) this.pending.delete(p.seq);
    return dead;
  }

  get inFlight(): number {
    return this.pending.size;
  }
}

/** True when the stream has gone quiet and the view must show STALE. */
export function isStale(lastArrivalMs: number | null, nowMs: number): boolean {
  return lastArrivalMs === null || nowMs - lastArrivalMs > 1000;
}
