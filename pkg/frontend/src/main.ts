/**
 * Browser entry point.
 *
 * Connects to the session service through a WebSocket-to-TCP bridge
 * (?ws=ws://host:port), wires the Fenchel-Nielsen sliders, play/pause,
 * refine and dt controls, and draws the Poincare disk plus energy and
 * tension charts.  All numerical state shown comes from service
 * snapshots.
 */

import { ProtocolClient, isSnapshot, type Snapshot } from "./protocol.js";
import { connectWebSocket } from "./transport.js";
import { ControlLoop, SLIDER_RANGES, type FnSliders } from "./controls.js";
import { buildScene } from "./scene.js";
import { drawScene, drawPolyline } from "./render.js";
import { defaultViewport } from "./projection.js";
import { toPolyline } from "./charts.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function sliderBlock(prefix: string): FnSliders {
  const get = (name: string) => parseFloat(el<HTMLInputElement>(`${prefix}-${name}`).value);
  return {
    lengths: [get("l1"), get("l2"), get("l3")],
    twists: [get("t1"), get("t2"), get("t3")],
  };
}

export function start(): void {
  const params = new URLSearchParams(location.search);
  const url = params.get("ws") ?? "ws://127.0.0.1:8572";
  const transport = connectWebSocket(url);
  const client = new ProtocolClient(transport);

  const canvas = el<HTMLCanvasElement>("disk");
  const ctx = canvas.getContext("2d")!;
  const vp = defaultViewport(canvas.width / 2, canvas.height / 2,
    Math.min(canvas.width, canvas.height) / 2 - 10);
  const energyCanvas = el<HTMLCanvasElement>("energy-chart");
  const tensionCanvas = el<HTMLCanvasElement>("tension-chart");
  const status = el<HTMLDivElement>("status");

  const loop = new ControlLoop(client, {
    onSnapshot: (snap: Snapshot) => {
      const scene = buildScene(snap, { showAxes: true, showDensity: true });
      drawScene(ctx, scene, vp);
      const ec = energyCanvas.getContext("2d")!;
      ec.clearRect(0, 0, energyCanvas.width, energyCanvas.height);
      drawPolyline(ec, toPolyline(loop.energyChart.values, energyCanvas.width,
        energyCanvas.height).points, "#2b63c7");
      const tc = tensionCanvas.getContext("2d")!;
      tc.clearRect(0, 0, tensionCanvas.width, tensionCanvas.height);
      drawPolyline(tc, toPolyline(loop.tensionChart.values, tensionCanvas.width,
        tensionCanvas.height, true).points, "#c73b2b");
      status.textContent =
        `level ${snap.level}  V=${snap.n_vertices}  F=${snap.n_triangles}  ` +
        `E=${snap.energy.toFixed(6)}  |tau|=${snap.tension.toExponential(2)}  ` +
        `dt=${snap.dt.toExponential(2)}  rev ${snap.revision}`;
    },
    onError: (code, message) => {
      status.textContent = `error [${code}] ${message}`;
    },
  });

  for (const input of document.querySelectorAll<HTMLInputElement>("input[type=range]")) {
    input.min = input.id.includes("-l") ? String(SLIDER_RANGES.lengthMin)
      : String(SLIDER_RANGES.twistMin);
    input.max = input.id.includes("-l") ? String(SLIDER_RANGES.lengthMax)
      : String(SLIDER_RANGES.twistMax);
    input.step = "0.05";
    input.addEventListener("change", () => {
      void loop.commitSliders(sliderBlock("dom"), sliderBlock("tar"),
        parseInt(el<HTMLInputElement>("level").value, 10));
    });
  }
  el<HTMLButtonElement>("create").addEventListener("click", () => {
    void loop.commitSliders(sliderBlock("dom"), sliderBlock("tar"),
      parseInt(el<HTMLInputElement>("level").value, 10));
  });
  el<HTMLButtonElement>("play").addEventListener("click", () => void loop.play());
  el<HTMLButtonElement>("pause").addEventListener("click", () => loop.pause());
  el<HTMLButtonElement>("refine").addEventListener("click", () => void loop.refine());
  el<HTMLInputElement>("dt").addEventListener("change", (ev) => {
    const value = (ev.target as HTMLInputElement).value.trim();
    void loop.setDt(value === "auto" ? "auto" : parseFloat(value));
  });
}

if (typeof document !== "undefined" && document.readyState !== "loading") {
  start();
} else if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", start);
}
