/** Affine projection between the unit disk and a circular viewport. */

export interface Viewport {
  cx: number; // pixel center of the viewport circle
  cy: number;
  radius: number; // pixel radius of the unit disk
  zoom: number; // disk units magnification
  panX: number; // disk-model coordinates of the view center
  panY: number;
}

export function defaultViewport(cx: number, cy: number, radius: number): Viewport {
  return { cx, cy, radius, zoom: 1, panX: 0, panY: 0 };
}

export interface Clamped {
  x: number;
  y: number;
  clamped: boolean;
}

/** Disk -> screen.  Points with |p| >= 1 are clamped onto the boundary
 * circle and flagged so the renderer can mark them. */
export function diskToScreen(px: number, py: number, vp: Viewport): Clamped {
  let clamped = false;
  const r = Math.hypot(px, py);
  if (r >= 1) {
    clamped = true;
    px = px / (r + 1e-12);
    py = py / (r + 1e-12);
  }
  const x = vp.cx + vp.radius * vp.zoom * (px - vp.panX);
  const y = vp.cy - vp.radius * vp.zoom * (py - vp.panY);
  return { x, y, clamped };
}

/** Screen -> disk (inverse of diskToScreen inside the disk). */
export function screenToDisk(x: number, y: number, vp: Viewport): [number, number] {
  return [
    (x - vp.cx) / (vp.radius * vp.zoom) + vp.panX,
    -(y - vp.cy) / (vp.radius * vp.zoom) + vp.panY,
  ];
}
