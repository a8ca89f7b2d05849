/** Wire types for the exploration service API. */

export interface Landmark {
  id: number;
  name: string;
  position: [number, number];
}

export interface SpaceManifest {
  landmarks: Landmark[];
  edges: [number, number][];
  hull: number[];
  voronoi: [number, number][][];
  max_step: number;
  switch_t: number[] | null;
}

export interface MeshPayload {
  id: number;
  vertices: [number, number, number][];
  faces: [number, number, number][];
}

export interface SessionMessage {
  type: "session";
  session: number;
  active: number;
  position: [number, number];
  seq: number;
}

export interface SwitchMessage {
  type: "switch";
  landmark: number;
  position: [number, number];
  seq: number;
}

export interface DragDoneMessage {
  type: "drag-done";
  seq: number;
  position: [number, number];
  active: number;
  clamped: boolean;
}

export interface ErrorMessage {
  type: "error";
  error: string;
}

export type ControlMessage =
  | SessionMessage
  | SwitchMessage
  | DragDoneMessage
  | ErrorMessage;

export interface GeometryFrame {
  seq: number;
  positions: Float32Array; // xyz triplets
}
