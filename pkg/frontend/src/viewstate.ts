/**
 * Single source of truth for what the viewports render.
 *
 * The transport's control/frame events are the only mutation source for
 * mesh state; frames apply in sequence order (stale ones counted and
 * dropped), and a switch event swaps the index buffer before the next
 * rendered frame.
 */

import { FrameSink } from "./frames.js";
import type {
  ControlMessage,
  GeometryFrame,
  MeshPayload,
  SpaceManifest,
} from "./types.js";

export interface MeshBuffers {
  positions: Float32Array;
  faces: Uint32Array;
}

export class ViewState {
  manifest: SpaceManifest | null = null;
  sessionId: number | null = null;
  active: number | null = null;
  cursor: [number, number] | null = null;
  /** Exact sequence of drag targets sent, for the trajectory trace. */
  trajectory: [number, number][] = [];
  faces: Uint32Array | null = null;
  sink = new FrameSink();
  /** Bumped whenever the renderable mesh (positions or faces) changes. */
  revision = 0;
  lastError: string | null = null;
  pendingSwitch: number | null = null;

  private meshCache = new Map<number, MeshBuffers>();

  cacheMesh(id: number, mesh: MeshPayload): void {
    const positions = new Float32Array(mesh.vertices.length * 3);
    mesh.vertices.forEach(([x, y, z], i) => {
      positions[3 * i] = x;
      positions[3 * i + 1] = y;
      positions[3 * i + 2] = z;
    });
    const faces = new Uint32Array(mesh.faces.length * 3);
    mesh.faces.forEach(([a, b, c], i) => {
      faces[3 * i] = a;
      faces[3 * i + 1] = b;
      faces[3 * i + 2] = c;
    });
    this.meshCache.set(id, { positions, faces });
  }

  hasMesh(id: number): boolean {
    return this.meshCache.has(id);
  }

  recordDrag(target: [number, number]): void {
    this.trajectory.push([target[0], target[1]]);
  }

  control(msg: ControlMessage): void {
    switch (msg.type) {
      case "session": {
        this.sessionId = msg.session;
        this.active = msg.active;
        this.cursor = msg.position;
        this.trajectory = [[msg.position[0], msg.position[1]]];
        this.sink = new FrameSink();
        this.faces = this.meshCache.get(msg.active)?.faces ?? null;
        this.revision += 1;
        break;
      }
      case "switch": {
        // The new active landmark's faces must be live before the next
        // frame renders; its vertex buffer arrives as the next frame.
        this.active = msg.landmark;
        const cached = this.meshCache.get(msg.landmark);
        if (cached) {
          this.faces = cached.faces;
          this.pendingSwitch = null;
        } else {
          this.pendingSwitch = msg.landmark;
        }
        this.revision += 1;
        break;
      }
      case "drag-done": {
        this.cursor = msg.position;
        this.active = msg.active;
        break;
      }
      case "error": {
        this.lastError = msg.error;
        break;
      }
    }
  }

  frame(frame: GeometryFrame): void {
    if (this.sink.apply(frame)) {
      this.revision += 1;
    }
  }

  /** Current renderable mesh, or null until a session frame arrived. */
  current(): MeshBuffers | null {
    if (!this.sink.positions || !this.faces) return null;
    return { positions: this.sink.positions, faces: this.faces };
  }

  get droppedFrames(): number {
    return this.sink.dropped;
  }

  get dropRate(): number {
    return this.sink.dropRate;
  }
}
