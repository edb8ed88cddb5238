/** Canvas painter: draws a Scene through a Viewport.  The only impure
 * rendering layer; everything it draws comes from buildScene. */

import type { Scene } from "./scene.js";
import { diskToScreen, type Viewport } from "./projection.js";

function densityColor(t: number): string {
  // compact viridis-like ramp
  const stops = [
    [68, 1, 84],
    [59, 82, 139],
    [33, 145, 140],
    [94, 201, 98],
    [253, 231, 37],
  ];
  const x = Math.min(Math.max(t, 0), 1) * (stops.length - 1);
  const i = Math.min(Math.floor(x), stops.length - 2);
  const f = x - i;
  const c = stops[i].map((v, k) => Math.round(v + f * (stops[i + 1][k] - v)));
  return `rgb(${c[0]},${c[1]},${c[2]})`;
}

export function drawScene(
  ctx: CanvasRenderingContext2D,
  scene: Scene,
  vp: Viewport,
): void {
  ctx.clearRect(0, 0, ctx.canvas.width, ctx.canvas.height);
  ctx.lineWidth = 1;
  ctx.strokeStyle = "#222";
  ctx.beginPath();
  ctx.arc(vp.cx, vp.cy, vp.radius * vp.zoom, 0, 2 * Math.PI);
  ctx.stroke();

  for (const arc of scene.meshArcs) {
    ctx.strokeStyle = arc.color;
    ctx.lineWidth = arc.width;
    ctx.beginPath();
    if (arc.kind === "line") {
      const p = diskToScreen(arc.x1, arc.y1, vp);
      const q = diskToScreen(arc.x2, arc.y2, vp);
      ctx.moveTo(p.x, p.y);
      ctx.lineTo(q.x, q.y);
    } else {
      const c = diskToScreen(arc.cx, arc.cy, vp);
      const scale = vp.radius * vp.zoom;
      // screen y is flipped, so angles and sweep direction mirror
      ctx.arc(c.x, c.y, arc.r * scale, -arc.start, -arc.end, !arc.anticlockwise);
    }
    ctx.stroke();
  }

  for (const axis of scene.axisPolylines) {
    ctx.strokeStyle = axis.color;
    ctx.lineWidth = axis.width;
    ctx.beginPath();
    axis.points.forEach(([x, y], i) => {
      const p = diskToScreen(x, y, vp);
      if (i === 0) ctx.moveTo(p.x, p.y);
      else ctx.lineTo(p.x, p.y);
    });
    ctx.stroke();
  }

  const [lo, hi] = scene.densityRange;
  const span = Math.max(hi - lo, 1e-12);
  for (const dot of scene.vertexDots) {
    const p = diskToScreen(dot.x, dot.y, vp);
    ctx.fillStyle = densityColor((dot.value - lo) / span);
    ctx.beginPath();
    ctx.arc(p.x, p.y, 2.0, 0, 2 * Math.PI);
    ctx.fill();
    if (p.clamped) {
      ctx.strokeStyle = "#d33";
      ctx.stroke();
    }
  }
}

export function drawPolyline(
  ctx: CanvasRenderingContext2D,
  points: [number, number][],
  color: string,
): void {
  if (points.length === 0) return;
  ctx.strokeStyle = color;
  ctx.lineWidth = 1.25;
  ctx.beginPath();
  points.forEach(([x, y], i) => {
    if (i === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  });
  ctx.stroke();
}
