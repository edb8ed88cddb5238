/**
 * Wire protocol of the harmflow session service.
 *
 * Frames are length-delimited JSON text: the decimal byte length of the
 * payload, a newline, then the UTF-8 JSON payload.  Replies carry `ok`
 * plus a monotone per-session `revision`; errors carry a machine code in
 * {invalid_input, not_found, instability, limit}.
 */

export type ErrorCode = "invalid_input" | "not_found" | "instability" | "limit";

export interface ErrorReply {
  ok: false;
  code: ErrorCode;
  message: string;
}

export interface Snapshot {
  ok: true;
  protocol: number;
  id: string;
  revision: number;
  level: number;
  n_vertices: number;
  n_edges: number;
  n_triangles: number;
  dt: number;
  tolerance: number;
  energy: number;
  tension: number;
  energy_history: number[];
  tension_history: number[];
  history_total: number;
  vertices: [number, number][];
  values: [number, number][];
  edges: [number, number][];
  segments: [number, number, number, number][];
  segments_decimated: boolean;
  axes: [number, number][][];
  energy_density: number[];
  diverged: boolean;
}

export interface CloseReply {
  ok: true;
  id: string;
  closed: true;
  revision: number;
}

export type Reply = Snapshot | CloseReply | ErrorReply;

export type Request =
  | { type: "create"; fn_domain: string; fn_target: string; level: number }
  | { type: "step"; id: string; count: number; full?: boolean }
  | { type: "refine"; id: string; full?: boolean }
  | { type: "state"; id: string; full?: boolean }
  | { type: "set_params"; id: string; dt?: number | "auto"; tolerance?: number }
  | { type: "close"; id: string };

export function isSnapshot(reply: Reply): reply is Snapshot {
  return reply.ok === true && !("closed" in reply);
}

const encoder = new TextEncoder();
const decoder = new TextDecoder();

export function encodeFrame(message: unknown): Uint8Array {
  const payload = encoder.encode(JSON.stringify(message));
  const header = encoder.encode(String(payload.length) + "\n");
  const out = new Uint8Array(header.length + payload.length);
  out.set(header, 0);
  out.set(payload, header.length);
  return out;
}

/** Incremental frame parser: feed arbitrary chunks, collect whole frames. */
export class FrameParser {
  private buffer = new Uint8Array(0);

  feed(chunk: Uint8Array): unknown[] {
    const merged = new Uint8Array(this.buffer.length + chunk.length);
    merged.set(this.buffer, 0);
    merged.set(chunk, this.buffer.length);
    this.buffer = merged;
    const frames: unknown[] = [];
    for (;;) {
      const nl = this.buffer.indexOf(0x0a);
      if (nl < 0) break;
      const len = parseInt(decoder.decode(this.buffer.subarray(0, nl)), 10);
      if (!Number.isFinite(len) || len < 0) {
        throw new Error("bad frame header");
      }
      if (this.buffer.length < nl + 1 + len) break;
      const payload = this.buffer.subarray(nl + 1, nl + 1 + len);
      frames.push(JSON.parse(decoder.decode(payload)));
      this.buffer = this.buffer.subarray(nl + 1 + len);
    }
    return frames;
  }
}

/** Transport abstraction: node TCP in scripts/tests, WebSocket bridges in
 * the browser, in-memory fakes in unit tests. */
export interface Transport {
  send(bytes: Uint8Array): void;
  onData(handler: (chunk: Uint8Array) => void): void;
  onClose(handler: () => void): void;
  close(): void;
}

/**
 * Request/reply client over a Transport.  The service replies strictly in
 * order per connection, and the UI keeps at most one mutating request in
 * flight per session; the client enforces sequential dispatch.
 */
export class ProtocolClient {
  private parser = new FrameParser();
  private queue: Array<{
    resolve: (r: Reply) => void;
    reject: (e: Error) => void;
  }> = [];
  private closed = false;

  constructor(private transport: Transport) {
    transport.onData((chunk) => {
      let frames: unknown[];
      try {
        frames = this.parser.feed(chunk);
      } catch (err) {
        this.failAll(err instanceof Error ? err : new Error(String(err)));
        return;
      }
      for (const frame of frames) {
        const waiter = this.queue.shift();
        if (waiter) waiter.resolve(frame as Reply);
      }
    });
    transport.onClose(() => {
      this.closed = true;
      this.failAll(new Error("connection closed"));
    });
  }

  private failAll(err: Error) {
    const waiting = this.queue;
    this.queue = [];
    for (const w of waiting) w.reject(err);
  }

  get pending(): number {
    return this.queue.length;
  }

  request(message: Request): Promise<Reply> {
    if (this.closed) return Promise.reject(new Error("connection closed"));
    return new Promise((resolve, reject) => {
      this.queue.push({ resolve, reject });
      this.transport.send(encodeFrame(message));
    });
  }

  close(): void {
    this.closed = true;
    this.failAll(new Error("connection closed"));
    this.transport.close();
  }
}
