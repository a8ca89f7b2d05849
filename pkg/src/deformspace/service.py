"""Real-time exploration API over a loaded space bundle.

HTTP endpoints serve space metadata and landmark meshes; a WebSocket at
/api/session runs incremental deformation sessions for interactive
dragging. Geometry frames are binary (sequence u64, vertex count u32,
f32 positions); control messages (start/switch/drag-done/error) are
JSON text. The bundle is shared read-only across sessions; each session
lives on its own connection, which serializes its message handling.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse

from .bundle import SpaceBundle
from .deform import flow_step
from .errors import DeformspaceError
from .geomcore import locate, voronoi_cell_of, voronoi_cell_polygons

logger = logging.getLogger(__name__)

__all__ = ["create_app", "Session"]


@dataclass
class Session:
    """One interactive deformation session (single WebSocket connection)."""

    session_id: int
    active: int
    position: np.ndarray
    vertices: np.ndarray
    path: list = field(default_factory=list)
    seq: int = 0
    smoothing: float = 15.0
    faulted: bool = False


def pack_frame(seq: int, vertices: np.ndarray) -> bytes:
    return struct.pack("<QI", seq, len(vertices)) + vertices.astype("<f4").tobytes()


def _nearest_hull_point(ring: np.ndarray, q: np.ndarray) -> np.ndarray:
    best, best_d = None, np.inf
    m = len(ring)
    for i in range(m):
        a, b = ring[i], ring[(i + 1) % m]
        ab = b - a
        t = float(np.clip((q - a) @ ab / max(ab @ ab, 1e-30), 0.0, 1.0))
        p = a + t * ab
        d = float(np.hypot(*(q - p)))
        if d < best_d:
            best, best_d = p, d
    return best


def create_app(space: SpaceBundle, ui_dir=None) -> FastAPI:
    """App over a built bundle; optionally serves a static UI at /."""
    space.require("train-map")
    app = FastAPI(title="deformspace")
    tri = space.triangulation
    positions = space.positions
    hull_ring = positions[tri.hull]
    centroid = hull_ring.mean(axis=0)
    edge_lengths = np.linalg.norm(
        positions[tri.edges[:, 0]] - positions[tri.edges[:, 1]], axis=1
    )
    # Sub-step granularity echoes the 180-sample integration density.
    max_step = float(edge_lengths.mean()) / 180.0
    cells = voronoi_cell_polygons(positions, hull_ring)
    session_counter = {"next": 0}

    @app.get("/api/space")
    def get_space():
        return {
            "landmarks": [
                {"id": i, "name": space.mesh_names[i],
                 "position": [float(x) for x in positions[i]]}
                for i in range(space.landmark_count)
            ],
            "edges": [[int(u), int(v)] for u, v in tri.edges],
            "hull": [int(i) for i in tri.hull],
            "voronoi": [[[float(x), float(y)] for x, y in cell] for cell in cells],
            "max_step": max_step,
            "switch_t": [float(t) for t in space.switch_t]
            if space.switch_t is not None else None,
        }

    @app.get("/api/mesh/{landmark_id}")
    def get_mesh(landmark_id: int):
        if not 0 <= landmark_id < space.landmark_count:
            return JSONResponse({"error": f"no landmark {landmark_id}"}, status_code=404)
        mesh = space.meshes[landmark_id]
        return {
            "id": landmark_id,
            "vertices": [[float(c) for c in v] for v in mesh.vertices],
            "faces": [[int(i) for i in f] for f in mesh.faces],
        }

    def clamp_to_hull(q: np.ndarray) -> tuple[np.ndarray, bool]:
        if locate(tri, q) is not None:
            return q, False
        p = _nearest_hull_point(hull_ring, q)
        # Pull a hair toward the centroid so the point is strictly inside.
        return p + 1e-9 * (centroid - p), True

    def first_crossing(session: Session, a: np.ndarray, b: np.ndarray):
        """Earliest point on [a, b] where the Voronoi owner changes."""
        s_act = positions[session.active]
        fa_act = ((a - s_act) ** 2).sum()
        fb_act = ((b - s_act) ** 2).sum()
        best_t = None
        for j in range(len(positions)):
            if j == session.active:
                continue
            s_j = positions[j]
            f0 = ((a - s_j) ** 2).sum() - fa_act
            f1 = ((b - s_j) ** 2).sum() - fb_act
            if f1 < 0.0 and f0 > 0.0:
                t = f0 / (f0 - f1)
                if best_t is None or t < best_t:
                    best_t = t
        if best_t is None:
            return None
        return a + best_t * (b - a)

    def advect(session: Session, a: np.ndarray, b: np.ndarray) -> None:
        if np.array_equal(a, b):
            return
        session.vertices = flow_step(
            space.generator, space.model, space.fem, a, b,
            session.vertices, session.smoothing,
        )

    def fresh_trajectory(landmark: int, to_point: np.ndarray, smoothing: float) -> np.ndarray:
        """New active mesh advected from its landmark position to the crossing."""
        verts = space.meshes[landmark].vertices
        start = positions[landmark]
        seg = to_point - start
        dist = float(np.hypot(*seg))
        if dist <= 1e-15:
            return verts.copy()
        n_sub = max(1, int(np.ceil(dist / max_step)))
        samples = start[None, :] + np.linspace(0, 1, n_sub + 1)[:, None] * seg[None, :]
        for i in range(n_sub):
            verts = flow_step(space.generator, space.model, space.fem,
                              samples[i], samples[i + 1], verts, smoothing)
        return verts

    @app.websocket("/api/session")
    async def session_socket(ws: WebSocket):
        await ws.accept()
        session: Session | None = None
        try:
            while True:
                msg = await ws.receive_json()
                kind = msg.get("type")
                if kind == "start":
                    lm = int(msg.get("landmark", -1))
                    if not 0 <= lm < space.landmark_count:
                        await ws.send_json({"type": "error", "error": f"no landmark {lm}"})
                        continue
                    session_counter["next"] += 1
                    session = Session(
                        session_id=session_counter["next"],
                        active=lm,
                        position=positions[lm].copy(),
                        vertices=space.meshes[lm].vertices.copy(),
                        smoothing=float(
                            msg.get("smoothing",
                                    space.config.get("deform", {}).get("smoothing", 15.0))
                        ),
                    )
                    session.path.append([float(x) for x in session.position])
                    await ws.send_json({
                        "type": "session",
                        "session": session.session_id,
                        "active": lm,
                        "position": [float(x) for x in session.position],
                        "seq": session.seq,
                    })
                    await ws.send_bytes(pack_frame(session.seq, session.vertices))
                elif kind == "drag":
                    if session is None:
                        await ws.send_json({"type": "error", "error": "no session started"})
                        continue
                    if session.faulted:
                        await ws.send_json({"type": "error", "error": "session faulted"})
                        continue
                    target = np.asarray(msg["target"], dtype=np.float64)
                    target, clamped = clamp_to_hull(target)
                    try:
                        await _handle_drag(ws, session, target)
                    except DeformspaceError as exc:
                        session.faulted = True
                        await ws.send_json({"type": "error", "error": str(exc)})
                        continue
                    session.path.append([float(x) for x in target])
                    await ws.send_json({
                        "type": "drag-done",
                        "seq": session.seq,
                        "position": [float(x) for x in session.position],
                        "active": session.active,
                        "clamped": clamped,
                    })
                else:
                    await ws.send_json({"type": "error", "error": f"unknown message {kind!r}"})
        except WebSocketDisconnect:
            pass

    async def _handle_drag(ws: WebSocket, session: Session, target: np.ndarray) -> None:
        seg = target - session.position
        dist = float(np.hypot(*seg))
        if dist <= 1e-15:
            return
        n_sub = max(1, int(np.ceil(dist / max_step)))
        samples = session.position[None, :] + (
            np.linspace(0, 1, n_sub + 1)[:, None] * seg[None, :]
        )
        for i in range(n_sub):
            a, b = samples[i], samples[i + 1]
            while True:
                crossing = first_crossing(session, a, b)
                if crossing is None:
                    break
                advect(session, a, crossing)
                step_dir = b - a
                probe = crossing + 1e-9 * step_dir
                new_lm = voronoi_cell_of(positions, probe)
                if new_lm == session.active:
                    break
                session.vertices = fresh_trajectory(new_lm, crossing, session.smoothing)
                session.active = new_lm
                session.seq += 1
                await ws.send_json({
                    "type": "switch",
                    "landmark": int(new_lm),
                    "position": [float(x) for x in crossing],
                    "seq": session.seq,
                })
                await ws.send_bytes(pack_frame(session.seq, session.vertices))
                a = crossing
            advect(session, a, b)
            session.position = b.copy()
            session.seq += 1
            await ws.send_bytes(pack_frame(session.seq, session.vertices))

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
