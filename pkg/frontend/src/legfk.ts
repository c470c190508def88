// Minimal leg-chain forward kinematics for the stick-figure view.  This is
// drawing support only (the console never simulates): ankle -> knee -> hip
// points per leg plus the torso line, using the default geometry of the
// simulated machine.

export interface Geometry {
  l1: number;        // knee-to-hip link
  l2: number;        // ankle-to-knee link
  wBase: number;     // ankle separation
}

export const DEFAULT_GEOMETRY: Geometry = {
  l1: 0.2667,
  l2: 1.029,
  wBase: 0.6922,
};

export type Vec3 = [number, number, number];

type Mat3 = number[][];

// Two-axis module rotation Rx(a) @ Ry(b) in the simulator's
// direction-cosine convention.
function rotXY(a: number, b: number): Mat3 {
  const ca = Math.cos(a), sa = Math.sin(a);
  const cb = Math.cos(b), sb = Math.sin(b);
  return [
    [cb, 0, -sb],
    [sa * sb, ca, sa * cb],
    [ca * sb, -sa, ca * cb],
  ];
}

function matMul(A: Mat3, B: Mat3): Mat3 {
  const C: Mat3 = [[0, 0, 0], [0, 0, 0], [0, 0, 0]];
  for (let i = 0; i < 3; i++)
    for (let j = 0; j < 3; j++)
      for (let k = 0; k < 3; k++) C[i][j] += A[i][k] * B[k][j];
  return C;
}

function col(A: Mat3, j: number): Vec3 {
  return [A[0][j], A[1][j], A[2][j]];
}

function add(a: Vec3, b: Vec3, s = 1): Vec3 {
  return [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]];
}

export interface LegPoints {
  ankle: Vec3;
  knee: Vec3;
  hip: Vec3;
}

export interface MechanismPoints {
  right: LegPoints;
  left: LegPoints;
  torso: Vec3;       // midpoint of the hip line
}

/** Joint points of both legs from the 12-entry joint vector
 * [phi_aR, th_aR, phi_kR, th_kR, phi_hR, th_hR, ...left]. */
export function mechanismPoints(
  q: number[], geo: Geometry = DEFAULT_GEOMETRY): MechanismPoints {
  const legs: LegPoints[] = [];
  const signs = [-1, 1];   // right leg sits at negative y
  for (let leg = 0; leg < 2; leg++) {
    const o = 6 * leg;
    const ankle: Vec3 = [0, signs[leg] * geo.wBase / 2, 0];
    const Ra = rotXY(q[o], q[o + 1]);
    const Rak = matMul(Ra, rotXY(q[o + 2], q[o + 3]));
    const knee = add(ankle, col(Ra, 2), geo.l2);
    const hip = add(knee, col(Rak, 2), geo.l1);
    legs.push({ ankle, knee, hip });
  }
  const torso: Vec3 = [
    (legs[0].hip[0] + legs[1].hip[0]) / 2,
    (legs[0].hip[1] + legs[1].hip[1]) / 2,
    (legs[0].hip[2] + legs[1].hip[2]) / 2,
  ];
  return { right: legs[0], left: legs[1], torso };
}
