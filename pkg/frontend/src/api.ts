/** HTTP metadata endpoints. */

import type { MeshPayload, SpaceManifest } from "./types.js";

export async function fetchSpace(base = ""): Promise<SpaceManifest> {
  const res = await fetch(`${base}/api/space`);
  if (!res.ok) throw new Error(`GET /api/space failed: ${res.status}`);
  return (await res.json()) as SpaceManifest;
}

export async function fetchMesh(id: number, base = ""): Promise<MeshPayload> {
  const res = await fetch(`${base}/api/mesh/${id}`);
  if (!res.ok) throw new Error(`GET /api/mesh/${id} failed: ${res.status}`);
  return (await res.json()) as MeshPayload;
}
