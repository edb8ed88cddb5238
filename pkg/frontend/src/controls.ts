/**
 * Control loop: user intent -> session messages.
 *
 * Invariants: at most one in-flight request per session; pressing pause
 * stops stepping after the in-flight reply; committing sliders during play
 * pauses, closes the session and creates a new one; step batches adapt to
 * reply latency to keep at least ~10 UI updates per second.
 */

import {
  isSnapshot,
  type ProtocolClient,
  type Reply,
  type Request,
  type Snapshot,
} from "./protocol.js";
import { ChartBuffer } from "./charts.js";

export interface SliderRanges {
  lengthMin: number;
  lengthMax: number;
  twistMin: number;
  twistMax: number;
}

export const SLIDER_RANGES: SliderRanges = {
  lengthMin: 0.5,
  lengthMax: 6.0,
  twistMin: -3.0,
  twistMax: 3.0,
};

export interface FnSliders {
  lengths: [number, number, number];
  twists: [number, number, number];
}

export function clampSliders(s: FnSliders, r: SliderRanges = SLIDER_RANGES): FnSliders {
  const cl = (v: number, lo: number, hi: number) => Math.min(hi, Math.max(lo, v));
  return {
    lengths: s.lengths.map((v) => cl(v, r.lengthMin, r.lengthMax)) as FnSliders["lengths"],
    twists: s.twists.map((v) => cl(v, r.twistMin, r.twistMax)) as FnSliders["twists"],
  };
}

export function formatFn(s: FnSliders): string {
  return [...s.lengths, ...s.twists].map((v) => String(v)).join(",");
}

export interface ControlEvents {
  onSnapshot?: (snap: Snapshot) => void;
  onError?: (code: string, message: string) => void;
}

const TARGET_LATENCY_MS = 100;

export class ControlLoop {
  sessionId: string | null = null;
  playing = false;
  inFlight = false;
  batchSize = 10;
  level = 2;
  readonly energyChart = new ChartBuffer();
  readonly tensionChart = new ChartBuffer();
  lastSnapshot: Snapshot | null = null;
  /** counts of dispatched messages, exposed for tests */
  readonly sent: Record<string, number> = {};

  constructor(
    private client: Pick<ProtocolClient, "request">,
    private events: ControlEvents = {},
    private now: () => number = () => Date.now(),
  ) {}

  private record(reply: Reply): void {
    if (isSnapshot(reply)) {
      this.lastSnapshot = reply;
      this.energyChart.appendFrom(
        reply.revision,
        reply.energy_history,
        reply.history_total,
      );
      this.tensionChart.appendFrom(
        reply.revision,
        reply.tension_history,
        reply.history_total,
      );
      this.events.onSnapshot?.(reply);
    } else if (!reply.ok) {
      this.playing = false;
      this.events.onError?.(reply.code, reply.message);
    }
  }

  private tail: Promise<unknown> = Promise.resolve();

  /** All requests are serialized: at most one in flight, in order. */
  private dispatch(message: Request): Promise<Reply> {
    const run = async (): Promise<Reply> => {
      this.inFlight = true;
      this.sent[message.type] = (this.sent[message.type] ?? 0) + 1;
      try {
        const reply = await this.client.request(message);
        this.record(reply);
        return reply;
      } finally {
        this.inFlight = false;
      }
    };
    const next = this.tail.then(run, run);
    this.tail = next.catch(() => undefined);
    return next;
  }

  async commitSliders(domain: FnSliders, target: FnSliders, level = this.level): Promise<Reply> {
    // a slider commit always pauses first; the old session is replaced
    this.playing = false;
    if (this.sessionId) {
      const old = this.sessionId;
      this.sessionId = null;
      await this.dispatch({ type: "close", id: old });
    }
    this.energyChart.reset();
    this.tensionChart.reset();
    const reply = await this.dispatch({
      type: "create",
      fn_domain: formatFn(clampSliders(domain)),
      fn_target: formatFn(clampSliders(target)),
      level,
    });
    if (isSnapshot(reply)) {
      this.sessionId = reply.id;
      this.level = reply.level;
    }
    return reply;
  }

  /** One play iteration: a step batch, with latency-adaptive sizing. */
  private async stepOnce(): Promise<void> {
    if (!this.sessionId) return;
    const t0 = this.now();
    const reply = await this.dispatch({
      type: "step",
      id: this.sessionId,
      count: this.batchSize,
    });
    const elapsed = Math.max(this.now() - t0, 1);
    if (isSnapshot(reply)) {
      const scale = TARGET_LATENCY_MS / elapsed;
      this.batchSize = Math.max(
        1,
        Math.min(5000, Math.round(this.batchSize * Math.min(Math.max(scale, 0.25), 4))),
      );
    }
  }

  async play(): Promise<void> {
    if (this.playing || !this.sessionId) return;
    this.playing = true;
    while (this.playing && this.sessionId) {
      await this.stepOnce();
      // yield to the event loop so pause clicks and timers can run
      await new Promise((resolve) => setTimeout(resolve, 0));
    }
  }

  pause(): void {
    // no further step messages are sent after the in-flight reply resolves
    this.playing = false;
  }

  async refine(): Promise<Reply | null> {
    if (!this.sessionId) return null;
    this.playing = false;
    return this.dispatch({ type: "refine", id: this.sessionId });
  }

  async setDt(dt: number | "auto"): Promise<Reply | null> {
    if (!this.sessionId) return null;
    return this.dispatch({ type: "set_params", id: this.sessionId, dt });
  }

  async requestState(): Promise<Reply | null> {
    if (!this.sessionId) return null;
    return this.dispatch({ type: "state", id: this.sessionId });
  }
}
