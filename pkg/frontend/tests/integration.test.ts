/**
 * End-to-end test against the real Python session service over TCP.
 *
 * Covers the frontend acceptance behaviors: a created session renders a
 * mesh whose edge count matches the service payload, stepping produces a
 * nonincreasing energy chart, and refining multiplies the displayed
 * triangles by four.
 */

import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { spawn, type ChildProcess } from "node:child_process";

import { ProtocolClient, isSnapshot, type Snapshot } from "../src/protocol.js";
import { connectTcp } from "../src/transport.js";
import { ControlLoop } from "../src/controls.js";
import { buildScene } from "../src/scene.js";
import { isNonIncreasing } from "../src/charts.js";

const FN_A = { lengths: [2, 2, 2] as [number, number, number],
               twists: [0, 0, 0] as [number, number, number] };
const FN_B = { lengths: [2.2, 1.9, 2.1] as [number, number, number],
               twists: [0.1, -0.05, 0.2] as [number, number, number] };

let proc: ChildProcess;
let port = 0;

beforeAll(async () => {
  proc = spawn("python3", ["-c", `
import sys
from harmflow import service
server, thread = service.start_background_server(max_level=4)
print("PORT", server.address[1], flush=True)
thread.join()
`], { cwd: "..", stdio: ["ignore", "pipe", "inherit"] });
  port = await new Promise<number>((resolve, reject) => {
    const timer = setTimeout(() => reject(new Error("service did not start")), 30000);
    proc.stdout!.on("data", (chunk: Buffer) => {
      const m = chunk.toString().match(/PORT (\d+)/);
      if (m) {
        clearTimeout(timer);
        resolve(parseInt(m[1], 10));
      }
    });
    proc.once("exit", (code) => reject(new Error(`service exited: ${code}`)));
  });
}, 40000);

afterAll(() => {
  proc?.kill();
});

describe("live service", () => {
  it("creates, steps, and refines a session", async () => {
    const transport = await connectTcp("127.0.0.1", port);
    const client = new ProtocolClient(transport);
    const loop = new ControlLoop(client);

    const created = await loop.commitSliders(FN_A, FN_B, 1);
    expect(created.ok).toBe(true);
    if (!isSnapshot(created)) throw new Error("expected a snapshot");

    // the rendered scene carries exactly the payload's segments, and the
    // payload's edge table matches the advertised edge count
    const scene = buildScene(created, { showAxes: true, showDensity: true });
    expect(scene.segmentCount).toBe(created.segments.length);
    expect(created.edges.length).toBe(created.n_edges);
    expect(scene.domainEdgeCount).toBe(created.n_edges);
    expect(created.vertices.length).toBe(created.n_vertices);

    // stepping lowers the energy monotonically (stable default dt)
    const stepped = await client.request({ type: "step", id: created.id, count: 150 });
    if (!isSnapshot(stepped)) throw new Error("expected a snapshot");
    expect(stepped.energy).toBeLessThan(created.energy);
    loop.energyChart.appendFrom(stepped.revision, stepped.energy_history,
      stepped.history_total);
    expect(isNonIncreasing(loop.energyChart.values)).toBe(true);

    // refinement multiplies the triangle count by four
    const refined = await client.request({ type: "refine", id: created.id });
    if (!isSnapshot(refined)) throw new Error("expected a snapshot");
    expect(refined.n_triangles).toBe(4 * created.n_triangles);
    expect(refined.level).toBe(created.level + 1);

    const closed = await client.request({ type: "close", id: created.id });
    expect(closed.ok).toBe(true);
    client.close();
  }, 120000);

  it("reports protocol errors with machine codes", async () => {
    const transport = await connectTcp("127.0.0.1", port);
    const client = new ProtocolClient(transport);
    const bad = await client.request({
      type: "create", fn_domain: "0,2,2,0,0,0", fn_target: "2,2,2,0,0,0",
      level: 1,
    });
    expect(bad.ok).toBe(false);
    if (!bad.ok) expect(bad.code).toBe("invalid_input");
    const missing = await client.request({ type: "state", id: "nope" });
    if (!missing.ok) expect(missing.code).toBe("not_found");
    client.close();
  }, 60000);
});
