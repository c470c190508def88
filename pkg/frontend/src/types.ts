// Wire schema for the simulator bridge (one JSON object per websocket
// text message, versioned with an integer `v`).  Field-by-field docs live
// in ../docs/protocol.md next to the simulator package.

export const PROTOCOL_VERSION = 1;

export interface TelemetryFrame {
  v: number;
  type: "telemetry";
  t: number;
  p: number[];        // [x, y, z, roll, pitch, yaw] task pose
  p_ref: number[];
  q: number[];        // 12 joint angles
  tau: number[];      // 12 joint torques
  f_op: number[];     // 6 operator wrench
  link_alive: boolean;
  flags: {
    ik_ok?: boolean;
    gain_fallback?: boolean;
    paused?: boolean;
    operator_z_target?: number;
    operator_theta_target?: number;
    assist?: number;
    verdict?: string;
  };
}

export interface Ack {
  v: number;
  type: "ack";
  ok: boolean;
  seq: number;
  error?: string;
}

export type CommandKind =
  | "set_operator_z"
  | "set_operator_theta"
  | "set_assist_force"
  | "kill_comms"
  | "restore_comms"
  | "push_x"
  | "pause"
  | "resume"
  | "reset";

export interface CommandMessage {
  v: number;
  type: "command";
  kind: CommandKind;
  value: number;
  client_id: string;
  seq: number;
}

// client-side validation mirrors the server ranges
export const COMMAND_RANGES: Partial<Record<CommandKind, [number, number]>> = {
  set_operator_z: [0.3, 1.0],
  set_operator_theta: [-0.5, 0.5],
  set_assist_force: [0.0, 250.0],
  push_x: [-200.0, 200.0],
};

export function validateCommand(kind: CommandKind, value: number): string | null {
  const range = COMMAND_RANGES[kind];
  if (!range) return null;
  if (!Number.isFinite(value)) return `${kind}: value is not a number`;
  const [lo, hi] = range;
  if (value < lo || value > hi) {
    return `${kind}: ${value} outside [${lo}, ${hi}]`;
  }
  return null;
}

export function isTelemetry(msg: unknown): msg is TelemetryFrame {
  const m = msg as TelemetryFrame;
  return (
    !!m && m.type === "telemetry" && m.v === PROTOCOL_VERSION &&
    Array.isArray(m.p) && Array.isArray(m.q)
  );
}

export function isAck(msg: unknown): msg is Ack {
  const m = msg as Ack;
  return !!m && m.type === "ack" && m.v === PROTOCOL_VERSION;
}
