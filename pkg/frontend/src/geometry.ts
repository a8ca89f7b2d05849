/** Pure mesh/camera math for the 3D viewport (no GL dependencies). */

/**
 * Area-weighted vertex normals recomputed from scratch; called per
 * geometry frame (the service streams positions only).
 */
export function computeNormals(positions: Float32Array, faces: Uint32Array): Float32Array {
  const normals = new Float32Array(positions.length);
  for (let f = 0; f < faces.length; f += 3) {
    const a = faces[f] * 3;
    const b = faces[f + 1] * 3;
    const c = faces[f + 2] * 3;
    const e1x = positions[b] - positions[a];
    const e1y = positions[b + 1] - positions[a + 1];
    const e1z = positions[b + 2] - positions[a + 2];
    const e2x = positions[c] - positions[a];
    const e2y = positions[c + 1] - positions[a + 1];
    const e2z = positions[c + 2] - positions[a + 2];
    const nx = e1y * e2z - e1z * e2y;
    const ny = e1z * e2x - e1x * e2z;
    const nz = e1x * e2y - e1y * e2x;
    for (const idx of [a, b, c]) {
      normals[idx] += nx;
      normals[idx + 1] += ny;
      normals[idx + 2] += nz;
    }
  }
  for (let v = 0; v < normals.length; v += 3) {
    const len = Math.hypot(normals[v], normals[v + 1], normals[v + 2]);
    if (len > 0) {
      normals[v] /= len;
      normals[v + 1] /= len;
      normals[v + 2] /= len;
    }
  }
  return normals;
}

export function boundingRadius(positions: Float32Array): number {
  let r2 = 0;
  for (let v = 0; v < positions.length; v += 3) {
    r2 = Math.max(
      r2,
      positions[v] ** 2 + positions[v + 1] ** 2 + positions[v + 2] ** 2,
    );
  }
  return Math.sqrt(r2);
}

/** Column-major 4x4 perspective matrix. */
export function perspective(fovY: number, aspect: number, near: number, far: number): Float32Array {
  const f = 1 / Math.tan(fovY / 2);
  const out = new Float32Array(16);
  out[0] = f / aspect;
  out[5] = f;
  out[10] = (far + near) / (near - far);
  out[11] = -1;
  out[14] = (2 * far * near) / (near - far);
  return out;
}

/** Column-major look-at view matrix for an orbit camera. */
export function orbitView(azimuth: number, elevation: number, distance: number): Float32Array {
  const ce = Math.cos(elevation);
  const eye = [
    distance * ce * Math.cos(azimuth),
    distance * ce * Math.sin(azimuth),
    distance * Math.sin(elevation),
  ];
  const zx = eye[0] / distance;
  const zy = eye[1] / distance;
  const zz = eye[2] / distance;
  // up = world z projected perpendicular to view direction
  let ux = -zx * zz;
  let uy = -zy * zz;
  let uz = 1 - zz * zz;
  const ulen = Math.hypot(ux, uy, uz) || 1;
  ux /= ulen;
  uy /= ulen;
  uz /= ulen;
  const xx = uy * zz - uz * zy;
  const xy = uz * zx - ux * zz;
  const xz = ux * zy - uy * zx;
  const out = new Float32Array(16);
  out.set([xx, ux, zx, 0, xy, uy, zy, 0, xz, uz, zz, 0, 0, 0, 0, 1]);
  out[12] = -(xx * eye[0] + xy * eye[1] + xz * eye[2]);
  out[13] = -(ux * eye[0] + uy * eye[1] + uz * eye[2]);
  out[14] = -(zx * eye[0] + zy * eye[1] + zz * eye[2]);
  return out;
}
