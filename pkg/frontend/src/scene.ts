/**
 * Pure scene construction: (snapshot, view state) -> drawable primitives.
 *
 * The renderer never recomputes physics: energies, densities and geometry
 * all come from the service snapshot, so identical inputs produce
 * identical scenes.
 */

import type { Snapshot } from "./protocol.js";
import { geodesicArc, type DiskArc } from "./geodesics.js";

export interface SceneStyle {
  color: string;
  width: number;
}

export interface Scene {
  unitCircle: true;
  meshArcs: Array<DiskArc & SceneStyle>;
  axisPolylines: Array<{ points: [number, number][] } & SceneStyle>;
  vertexDots: Array<{ x: number; y: number; value: number }>;
  domainEdgeCount: number;
  segmentCount: number;
  densityRange: [number, number];
}

export interface ViewOptions {
  showAxes: boolean;
  showDensity: boolean;
}

export const MESH_STYLE: SceneStyle = { color: "#4878a8", width: 0.75 };
export const RING_STYLE: SceneStyle = { color: "#9db8cf", width: 0.5 };
export const AXIS_STYLE: SceneStyle = { color: "#2b63c7", width: 1.2 };

export function buildScene(snapshot: Snapshot, opts: ViewOptions): Scene {
  const meshArcs: Scene["meshArcs"] = [];
  const domainEdgeCount = snapshot.edges.length;
  snapshot.segments.forEach((seg, i) => {
    const [x1, y1, x2, y2] = seg;
    const arc = geodesicArc(x1, y1, x2, y2);
    const style = i < domainEdgeCount ? MESH_STYLE : RING_STYLE;
    meshArcs.push({ ...arc, ...style });
  });

  const axisPolylines: Scene["axisPolylines"] = [];
  if (opts.showAxes) {
    for (const axis of snapshot.axes) {
      axisPolylines.push({ points: axis, ...AXIS_STYLE });
    }
  }

  const vertexDots: Scene["vertexDots"] = [];
  let lo = Infinity;
  let hi = -Infinity;
  if (opts.showDensity) {
    snapshot.vertices.forEach(([x, y], i) => {
      const value = snapshot.energy_density[i];
      lo = Math.min(lo, value);
      hi = Math.max(hi, value);
      vertexDots.push({ x, y, value });
    });
  }
  if (!Number.isFinite(lo)) {
    lo = 0;
    hi = 1;
  }
  return {
    unitCircle: true,
    meshArcs,
    axisPolylines,
    vertexDots,
    domainEdgeCount,
    segmentCount: snapshot.segments.length,
    densityRange: [lo, hi],
  };
}

/** Empty-state scene: just the disk boundary and the generator axes. */
export function emptyScene(axes: [number, number][][]): Scene {
  return {
    unitCircle: true,
    meshArcs: [],
    axisPolylines: axes.map((points) => ({ points, ...AXIS_STYLE })),
    vertexDots: [],
    domainEdgeCount: 0,
    segmentCount: 0,
    densityRange: [0, 1],
  };
}
