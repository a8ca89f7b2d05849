import { describe, expect, it } from "vitest";

import { FrameSink, decodeFrame } from "../src/frames.js";

function encodeFrame(seq: number, positions: number[]): ArrayBuffer {
  const count = positions.length / 3;
  const buf = new ArrayBuffer(12 + positions.length * 4);
  const view = new DataView(buf);
  view.setBigUint64(0, BigInt(seq), true);
  view.setUint32(8, count, true);
  new Float32Array(buf, 12).set(positions);
  return buf;
}

describe("decodeFrame", () => {
  it("decodes sequence, count and positions", () => {
    const frame = decodeFrame(encodeFrame(42, [1, 2, 3, 4, 5, 6]));
    expect(frame.seq).toBe(42);
    expect(Array.from(frame.positions)).toEqual([1, 2, 3, 4, 5, 6]);
  });

  it("rejects truncated buffers", () => {
    expect(() => decodeFrame(new ArrayBuffer(4))).toThrow(/too short/);
  });

  it("rejects length mismatches", () => {
    const buf = encodeFrame(1, [1, 2, 3]);
    expect(() => decodeFrame(buf.slice(0, buf.byteLength - 4))).toThrow(/length/);
  });
});

describe("FrameSink", () => {
  it("applies frames in order", () => {
    const sink = new FrameSink();
    for (const seq of [1, 2, 3]) {
      expect(sink.apply({ seq, positions: new Float32Array([seq]) })).toBe(true);
    }
    expect(sink.positions![0]).toBe(3);
    expect(sink.applied).toBe(3);
    expect(sink.dropped).toBe(0);
  });

  it("drops out-of-order frames and keeps the newest", () => {
    const sink = new FrameSink();
    sink.apply({ seq: 1, positions: new Float32Array([1]) });
    sink.apply({ seq: 3, positions: new Float32Array([3]) });
    expect(sink.apply({ seq: 2, positions: new Float32Array([2]) })).toBe(false);
    expect(sink.positions![0]).toBe(3);
    expect(sink.dropped).toBe(1);
  });

  it("drops duplicates", () => {
    const sink = new FrameSink();
    const frame = { seq: 5, positions: new Float32Array([5]) };
    sink.apply(frame);
    expect(sink.apply(frame)).toBe(false);
    expect(sink.dropRate).toBeCloseTo(0.5);
  });
});
