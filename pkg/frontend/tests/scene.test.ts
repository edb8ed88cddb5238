import { describe, expect, it } from "vitest";

import { geodesicArc, orthogonalityDefect } from "../src/geodesics.js";
import { buildScene, emptyScene, MESH_STYLE, RING_STYLE } from "../src/scene.js";
import type { Snapshot } from "../src/protocol.js";

describe("geodesic arcs", () => {
  it("renders a diameter through the origin as a straight chord", () => {
    const arc = geodesicArc(-0.5, 0, 0.7, 0);
    expect(arc.kind).toBe("line");
    const diag = geodesicArc(-0.3, -0.3, 0.6, 0.6);
    expect(diag.kind).toBe("line");
  });

  it("builds circles orthogonal to the unit circle", () => {
    const arc = geodesicArc(0.3, 0.1, -0.2, 0.5);
    expect(arc.kind).toBe("arc");
    expect(orthogonalityDefect(arc)).toBeLessThan(1e-12);
    if (arc.kind === "arc") {
      // both endpoints lie on the arc circle
      expect(Math.hypot(arc.cx - 0.3, arc.cy - 0.1)).toBeCloseTo(arc.r, 10);
      expect(Math.hypot(arc.cx + 0.2, arc.cy - 0.5)).toBeCloseTo(arc.r, 10);
    }
  });

  it("takes the minor arc", () => {
    const arc = geodesicArc(0.4, 0.0, 0.0, 0.4);
    if (arc.kind === "arc") {
      expect(Math.abs(arc.end - arc.start)).toBeLessThanOrEqual(Math.PI);
    }
  });
});

function fixtureSnapshot(): Snapshot {
  return {
    ok: true,
    protocol: 1,
    id: "fixture",
    revision: 3,
    level: 1,
    n_vertices: 3,
    n_edges: 2,
    n_triangles: 1,
    dt: 0.01,
    tolerance: 1e-8,
    energy: 12.5,
    tension: 0.3,
    energy_history: [13, 12.7, 12.5],
    tension_history: [1, 0.5, 0.3],
    history_total: 3,
    vertices: [[0, 0], [0.2, 0], [0, 0.2]],
    values: [[0.01, 0], [0.21, 0], [0, 0.19]],
    edges: [[0, 1], [0, 2]],
    segments: [
      [0, 0, 0.2, 0],
      [0, 0, 0, 0.2],
      [0.3, 0.3, 0.4, 0.35],
    ],
    segments_decimated: false,
    axes: [[[0, -0.9], [0, 0.9]]],
    energy_density: [1.0, 2.0, 3.0],
    diverged: false,
  };
}

describe("scene construction", () => {
  it("keeps one arc per payload segment and styles the domain first", () => {
    const snap = fixtureSnapshot();
    const scene = buildScene(snap, { showAxes: true, showDensity: true });
    expect(scene.meshArcs.length).toBe(snap.segments.length);
    expect(scene.domainEdgeCount).toBe(snap.edges.length);
    expect(scene.meshArcs[0].color).toBe(MESH_STYLE.color);
    expect(scene.meshArcs[2].color).toBe(RING_STYLE.color);
    expect(scene.axisPolylines.length).toBe(1);
    expect(scene.vertexDots.length).toBe(3);
    expect(scene.densityRange).toEqual([1.0, 3.0]);
  });

  it("is a pure function of its inputs", () => {
    const a = buildScene(fixtureSnapshot(), { showAxes: true, showDensity: true });
    const b = buildScene(fixtureSnapshot(), { showAxes: true, showDensity: true });
    expect(a).toEqual(b);
  });

  it("draws only the circle and axes for an empty mesh", () => {
    const scene = emptyScene([[[0, -1], [0, 1]]]);
    expect(scene.meshArcs.length).toBe(0);
    expect(scene.unitCircle).toBe(true);
    expect(scene.axisPolylines.length).toBe(1);
  });
});
