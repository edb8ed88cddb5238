/** Append-only chart buffers and pure polyline scaling for the history
 * charts (energy linear, tension logarithmic). */

const MAX_CHART_POINTS = 200000;

export class ChartBuffer {
  private data: number[] = [];
  private lastRevision = -1;

  /** Append points for a newer revision only (buffers are append-only). */
  appendFrom(revision: number, history: number[], total: number): void {
    if (revision <= this.lastRevision) return;
    this.lastRevision = revision;
    if (total <= this.data.length) return;
    const missing = total - this.data.length;
    const tail = history.slice(Math.max(0, history.length - missing));
    for (const v of tail) this.data.push(v);
    if (this.data.length > MAX_CHART_POINTS) {
      this.data.splice(0, this.data.length - MAX_CHART_POINTS);
    }
  }

  get values(): readonly number[] {
    return this.data;
  }

  get length(): number {
    return this.data.length;
  }

  reset(): void {
    this.data = [];
    this.lastRevision = -1;
  }
}

export interface Polyline {
  points: [number, number][];
}

/** Scale a series into a w x h box; log = semilog-y for tension decay. */
export function toPolyline(
  series: readonly number[],
  w: number,
  h: number,
  log = false,
): Polyline {
  if (series.length === 0) return { points: [] };
  const ys = log ? series.map((v) => Math.log10(Math.max(v, 1e-300))) : [...series];
  let lo = Math.min(...ys);
  let hi = Math.max(...ys);
  if (hi - lo < 1e-12) {
    hi = lo + 1;
  }
  const n = ys.length;
  const points: [number, number][] = ys.map((v, i) => [
    n === 1 ? 0 : (i / (n - 1)) * w,
    h - ((v - lo) / (hi - lo)) * h,
  ]);
  return { points };
}

export function isNonIncreasing(series: readonly number[], tol = 1e-10): boolean {
  for (let i = 1; i < series.length; i++) {
    if (series[i] > series[i - 1] + tol * Math.max(1, Math.abs(series[i - 1]))) {
      return false;
    }
  }
  return true;
}
