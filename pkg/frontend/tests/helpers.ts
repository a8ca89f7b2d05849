import type { SocketLike } from "../src/transport.js";
import type { MeshPayload } from "../src/types.js";

export function encodeFrame(seq: number, positions: number[]): ArrayBuffer {
  const count = positions.length / 3;
  const buf = new ArrayBuffer(12 + positions.length * 4);
  const view = new DataView(buf);
  view.setBigUint64(0, BigInt(seq), true);
  view.setUint32(8, count, true);
  new Float32Array(buf, 12).set(positions);
  return buf;
}

/** Scripted WebSocket double driven by the test. */
export class FakeSocket implements SocketLike {
  binaryType = "blob";
  onopen: ((ev: unknown) => void) | null = null;
  onclose: ((ev: unknown) => void) | null = null;
  onmessage: ((ev: { data: unknown }) => void) | null = null;
  onerror: ((ev: unknown) => void) | null = null;
  sent: string[] = [];
  closed = false;

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.closed = true;
    this.onclose?.({});
  }

  open(): void {
    this.onopen?.({});
  }

  receiveText(msg: object): void {
    this.onmessage?.({ data: JSON.stringify(msg) });
  }

  receiveFrame(seq: number, positions: number[]): void {
    this.onmessage?.({ data: encodeFrame(seq, positions) });
  }

  drop(): void {
    this.onclose?.({});
  }
}

export function triangleMesh(id: number): MeshPayload {
  return {
    id,
    vertices: [
      [0, 0, id],
      [1, 0, id],
      [0, 1, id],
    ],
    faces: [[0, 1, 2]],
  };
}
