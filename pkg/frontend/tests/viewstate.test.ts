import { describe, expect, it } from "vitest";

import { ViewState } from "../src/viewstate.js";
import { triangleMesh } from "./helpers.js";

function startedState(): ViewState {
  const state = new ViewState();
  state.cacheMesh(0, triangleMesh(0));
  state.cacheMesh(1, triangleMesh(1));
  state.control({ type: "session", session: 1, active: 0, position: [0, 0], seq: 0 });
  return state;
}

describe("ViewState", () => {
  it("renders the latest in-order frame", () => {
    const state = startedState();
    state.frame({ seq: 1, positions: new Float32Array(9).fill(1) });
    state.frame({ seq: 2, positions: new Float32Array(9).fill(2) });
    state.frame({ seq: 3, positions: new Float32Array(9).fill(3) });
    expect(state.current()!.positions[0]).toBe(3);
    expect(state.droppedFrames).toBe(0);
  });

  it("drops out-of-order frames (1,3,2 renders 3)", () => {
    const state = startedState();
    state.frame({ seq: 1, positions: new Float32Array(9).fill(1) });
    state.frame({ seq: 3, positions: new Float32Array(9).fill(3) });
    state.frame({ seq: 2, positions: new Float32Array(9).fill(2) });
    expect(state.current()!.positions[0]).toBe(3);
    expect(state.droppedFrames).toBe(1);
  });

  it("swaps the face buffer on a switch event before the next frame", () => {
    const state = startedState();
    state.frame({ seq: 1, positions: new Float32Array(9).fill(1) });
    const facesBefore = state.current()!.faces;
    const revBefore = state.revision;
    state.control({ type: "switch", landmark: 1, position: [0.5, 0], seq: 2 });
    // The very next renderable state must already carry the new faces.
    expect(state.active).toBe(1);
    expect(state.revision).toBeGreaterThan(revBefore);
    expect(state.current()!.faces).not.toBe(facesBefore);
    // Vertex count may change with the new topology; frame 3 brings it.
    state.frame({ seq: 3, positions: new Float32Array(9).fill(7) });
    expect(state.current()!.positions[0]).toBe(7);
  });

  it("tracks the exact drag targets as the trajectory", () => {
    const state = startedState();
    const targets: [number, number][] = [
      [0.1, 0.2],
      [0.2, 0.3],
      [0.25, 0.31],
    ];
    targets.forEach((t) => state.recordDrag(t));
    expect(state.trajectory).toEqual([[0, 0], ...targets]);
  });

  it("a new session resets sink and trajectory", () => {
    const state = startedState();
    state.frame({ seq: 5, positions: new Float32Array(9) });
    state.control({ type: "session", session: 2, active: 1, position: [1, 1], seq: 0 });
    expect(state.trajectory).toEqual([[1, 1]]);
    expect(state.sink.lastSeq).toBe(-1);
    expect(state.active).toBe(1);
  });

  it("records errors without touching geometry", () => {
    const state = startedState();
    state.frame({ seq: 1, positions: new Float32Array(9).fill(4) });
    state.control({ type: "error", error: "boom" });
    expect(state.lastError).toBe("boom");
    expect(state.current()!.positions[0]).toBe(4);
  });
});
