/** Binary geometry frame decoding and in-order application. */

import type { GeometryFrame } from "./types.js";

/** Decode a frame: u64 LE sequence, u32 LE vertex count, f32 positions. */
export function decodeFrame(buffer: ArrayBuffer): GeometryFrame {
  if (buffer.byteLength < 12) {
    throw new Error(`frame too short: ${buffer.byteLength} bytes`);
  }
  const view = new DataView(buffer);
  const seq = Number(view.getBigUint64(0, true));
  const count = view.getUint32(8, true);
  const expected = 12 + count * 12;
  if (buffer.byteLength !== expected) {
    throw new Error(`frame length ${buffer.byteLength} != ${expected} for ${count} vertices`);
  }
  return { seq, positions: new Float32Array(buffer, 12, count * 3) };
}

/**
 * Applies frames in sequence order. Stale (out-of-order or duplicate)
 * frames are dropped and counted; application itself is a cheap buffer
 * swap so the UI thread never queues frames.
 */
export class FrameSink {
  lastSeq = -1;
  applied = 0;
  dropped = 0;
  positions: Float32Array | null = null;

  /** Returns true when the frame advanced the mesh state. */
  apply(frame: GeometryFrame): boolean {
    if (frame.seq <= this.lastSeq) {
      this.dropped += 1;
      return false;
    }
    this.lastSeq = frame.seq;
    this.positions = frame.positions;
    this.applied += 1;
    return true;
  }

  get dropRate(): number {
    const total = this.applied + this.dropped;
    return total === 0 ? 0 : this.dropped / total;
  }
}
