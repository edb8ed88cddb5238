/** Transports: node TCP for scripts and tests, WebSocket for the browser
 * (through a TCP bridge), and an in-memory pair for unit tests. */

import type { Transport } from "./protocol.js";

export async function connectTcp(host: string, port: number): Promise<Transport> {
  const net = await import("node:net");
  const socket = net.createConnection({ host, port });
  await new Promise<void>((resolve, reject) => {
    socket.once("connect", () => resolve());
    socket.once("error", (err: Error) => reject(err));
  });
  socket.on("error", () => socket.destroy());
  return {
    send: (bytes) => socket.write(bytes),
    onData: (handler) => socket.on("data", (b: Buffer) => handler(new Uint8Array(b))),
    onClose: (handler) => socket.on("close", handler),
    close: () => socket.end(),
  };
}

export function connectWebSocket(url: string): Transport {
  const ws = new WebSocket(url);
  ws.binaryType = "arraybuffer";
  const dataHandlers: Array<(chunk: Uint8Array) => void> = [];
  const closeHandlers: Array<() => void> = [];
  ws.onmessage = (ev) => {
    const bytes = new Uint8Array(ev.data as ArrayBuffer);
    for (const h of dataHandlers) h(bytes);
  };
  ws.onclose = () => {
    for (const h of closeHandlers) h();
  };
  return {
    send: (bytes) => ws.send(bytes),
    onData: (handler) => dataHandlers.push(handler),
    onClose: (handler) => closeHandlers.push(handler),
    close: () => ws.close(),
  };
}

/** Connected in-memory transport pair for tests. */
export function memoryPair(): [Transport, Transport] {
  const aData: Array<(chunk: Uint8Array) => void> = [];
  const bData: Array<(chunk: Uint8Array) => void> = [];
  const aClose: Array<() => void> = [];
  const bClose: Array<() => void> = [];
  const a: Transport = {
    send: (bytes) => queueMicrotask(() => bData.forEach((h) => h(bytes))),
    onData: (h) => aData.push(h),
    onClose: (h) => aClose.push(h),
    close: () => queueMicrotask(() => bClose.forEach((h) => h())),
  };
  const b: Transport = {
    send: (bytes) => queueMicrotask(() => aData.forEach((h) => h(bytes))),
    onData: (h) => bData.push(h),
    onClose: (h) => bClose.push(h),
    close: () => queueMicrotask(() => aClose.forEach((h) => h())),
  };
  return [a, b];
}
