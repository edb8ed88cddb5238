/**
 * Exact geodesic arcs in the Poincare disk.
 *
 * The geodesic through two interior points is the circle orthogonal to the
 * unit circle through them (center c with |c|^2 = R^2 + 1), or a straight
 * chord when the points are collinear with the origin.
 */

export type DiskArc =
  | { kind: "line"; x1: number; y1: number; x2: number; y2: number }
  | {
      kind: "arc";
      cx: number;
      cy: number;
      r: number;
      start: number; // radians
      end: number; //   drawn counterclockwise from start to end
      anticlockwise: boolean;
    };

const COLLINEAR_EPS = 1e-9;

export function geodesicArc(
  x1: number,
  y1: number,
  x2: number,
  y2: number,
): DiskArc {
  // orthocircle center solves 2 x c = 1 + |z|^2 for both endpoints
  const det = 2 * (x1 * y2 - x2 * y1);
  if (Math.abs(det) < COLLINEAR_EPS) {
    return { kind: "line", x1, y1, x2, y2 };
  }
  const b1 = 1 + x1 * x1 + y1 * y1;
  const b2 = 1 + x2 * x2 + y2 * y2;
  const cx = (b1 * y2 - b2 * y1) / det;
  const cy = (b2 * x1 - b1 * x2) / det;
  const r = Math.hypot(cx - x1, cy - y1);
  let start = Math.atan2(y1 - cy, x1 - cx);
  let end = Math.atan2(y2 - cy, x2 - cx);
  // take the minor arc (the geodesic segment is always the short way round)
  let delta = end - start;
  while (delta > Math.PI) delta -= 2 * Math.PI;
  while (delta < -Math.PI) delta += 2 * Math.PI;
  return {
    kind: "arc",
    cx,
    cy,
    r,
    start,
    end: start + delta,
    anticlockwise: delta < 0,
  };
}

/** Orthogonality defect of an arc against the unit circle (0 for exact). */
export function orthogonalityDefect(arc: DiskArc): number {
  if (arc.kind === "line") return 0;
  return Math.abs(arc.cx * arc.cx + arc.cy * arc.cy - arc.r * arc.r - 1);
}
