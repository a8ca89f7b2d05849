"""Versioned on-disk space bundles.

A bundle directory contains everything needed to reopen and explore a
built space deterministically: a canonical JSON manifest plus raw
little-endian binary payloads (inspectable, streamable, no container
format). Every payload carries a sha256 checksum in the manifest;
loading then saving reproduces byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BundleError
from .generator import (
    Generator,
    generator_spec_with_shapes,
    make_generator,
    split_weight_blob,
    weight_blob,
)
from .geodesic import GeodesicPolyline
from .geomcore import Triangulation2D, TriMesh, delaunay, read_obj, write_obj
from .smallnet import Encoding, MlpParams
from .submanifold import FemMesh, MapModel

FORMAT = "deformspace-bundle"
VERSION = 1

STAGES = ["project", "embed", "geodesics", "train-map", "switchpoints"]


@dataclass
class SpaceBundle:
    """In-memory view of a (possibly partially built) space."""

    generator: Generator
    mesh_names: list
    meshes: list                      # TriMesh per landmark
    config: dict = field(default_factory=dict)
    seed: int = 0
    latents: np.ndarray | None = None        # (L, d)
    positions: np.ndarray | None = None      # (L, 2)
    pinned: list = field(default_factory=list)
    polylines: list | None = None             # GeodesicPolyline per Delaunay edge
    fem: FemMesh | None = None
    model: MapModel | None = None
    switch_t: np.ndarray | None = None         # per edge t*
    stages: list = field(default_factory=list)

    @property
    def landmark_count(self) -> int:
        return len(self.meshes)

    @property
    def triangulation(self) -> Triangulation2D:
        if self.positions is None:
            raise BundleError("bundle has no embedding yet; run the embed stage")
        return delaunay(self.positions)

    def require(self, stage: str) -> None:
        if stage not in self.stages:
            raise BundleError(
                f"bundle is missing the {stage!r} stage; run `deformspace {stage}` first"
            )


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def _write_latents(path: Path, latents: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(struct.pack("<QQ", *latents.shape))
        fh.write(latents.astype("<f8").tobytes())


def _read_latents(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    n, d = struct.unpack_from("<QQ", raw, 0)
    return np.frombuffer(raw, dtype="<f8", offset=16).reshape(n, d).copy()


def _write_polylines(path: Path, edges: np.ndarray, polylines: list) -> None:
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(polylines)))
        for (u, v), poly in zip(edges, polylines):
            n, d = poly.nodes.shape
            fh.write(struct.pack("<IIQQ", int(u), int(v), n, d))
            fh.write(poly.nodes.astype("<f8").tobytes())
            fh.write(struct.pack("<Q", len(poly.warp)))
            fh.write(poly.warp.astype("<f8").tobytes())


def _read_polylines(path: Path, edges: np.ndarray) -> list:
    raw = path.read_bytes()
    off = 0
    (count,) = struct.unpack_from("<I", raw, off)
    off += 4
    polys = []
    for ei in range(count):
        u, v, n, d = struct.unpack_from("<IIQQ", raw, off)
        off += 24
        if ei >= len(edges) or (u, v) != (int(edges[ei, 0]), int(edges[ei, 1])):
            raise BundleError(f"{path.name}: edge record {ei} does not match triangulation")
        nodes = np.frombuffer(raw, dtype="<f8", count=n * d, offset=off).reshape(n, d)
        off += 8 * n * d
        (m,) = struct.unpack_from("<Q", raw, off)
        off += 8
        warp = np.frombuffer(raw, dtype="<f8", count=2 * m, offset=off).reshape(m, 2)
        off += 16 * m
        polys.append(GeodesicPolyline(nodes.copy(), warp.copy()))
    if count != len(edges):
        raise BundleError(f"{path.name}: {count} polylines for {len(edges)} edges")
    return polys


def _write_fem(path: Path, fem: FemMesh) -> None:
    with open(path, "wb") as fh:
        fh.write(struct.pack("<QQ", len(fem.vertices), len(fem.faces)))
        fh.write(fem.vertices.astype("<f8").tobytes())
        fh.write(fem.faces.astype("<u4").tobytes())
        fh.write(fem.tag_kind.astype("<i1").tobytes())
        fh.write(fem.tag_edge.astype("<i4").tobytes())
        fh.write(fem.tag_t.astype("<f8").tobytes())
        fh.write(fem.tag_landmark.astype("<i4").tobytes())
        fh.write(fem.facet_of_face.astype("<i4").tobytes())
        fh.write(fem.vertex_facet.astype("<i4").tobytes())


def _read_fem(path: Path, base: Triangulation2D) -> FemMesh:
    raw = path.read_bytes()
    m, f = struct.unpack_from("<QQ", raw, 0)
    off = 16

    def take(dtype, count, shape):
        nonlocal off
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=off)
        off += arr.nbytes
        return arr.reshape(shape).copy()

    vertices = take("<f8", 2 * m, (m, 2))
    faces = take("<u4", 3 * f, (f, 3)).astype(np.int64)
    tag_kind = take("<i1", m, (m,))
    tag_edge = take("<i4", m, (m,))
    tag_t = take("<f8", m, (m,))
    tag_landmark = take("<i4", m, (m,))
    facet_of_face = take("<i4", f, (f,))
    vertex_facet = take("<i4", m, (m,))
    return FemMesh(vertices, faces, tag_kind, tag_edge, tag_t, tag_landmark,
                   facet_of_face, vertex_facet, base)


def _write_mlp(path: Path, mlp: MlpParams) -> None:
    with open(path, "wb") as fh:
        for arr in mlp.flat():
            fh.write(arr.astype("<f4").tobytes())


def _read_mlp(path: Path, layer_dims: list, activation: str) -> MlpParams:
    raw = np.fromfile(path, dtype="<f4").astype(np.float64)
    ws, bs = [], []
    off = 0
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        ws.append(raw[off : off + fan_in * fan_out].reshape(fan_out, fan_in))
        off += fan_in * fan_out
        bs.append(raw[off : off + fan_out])
        off += fan_out
    if off != raw.size:
        raise BundleError(f"{path.name}: weight payload size mismatch")
    return MlpParams(ws, bs, activation)


def save(space: SpaceBundle, directory) -> Path:
    """Write the bundle; returns the manifest path."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    (root / "meshes").mkdir(exist_ok=True)
    payloads: list[str] = []

    manifest: dict = {
        "format": FORMAT,
        "version": VERSION,
        "seed": space.seed,
        "config": space.config,
        "stages": list(space.stages),
        "generator": generator_spec_with_shapes(space.generator),
        "landmarks": [],
    }
    if space.generator.weight_arrays():
        (root / "generator.bin").write_bytes(weight_blob(space.generator))
        manifest["generator_weights"] = "generator.bin"
        payloads.append("generator.bin")

    for i, (name, mesh) in enumerate(zip(space.mesh_names, space.meshes)):
        rel = f"meshes/landmark_{i:03d}.obj"
        write_obj(mesh, root / rel)
        payloads.append(rel)
        manifest["landmarks"].append({"id": i, "name": name, "mesh": rel})

    if space.latents is not None:
        _write_latents(root / "latents.bin", space.latents)
        payloads.append("latents.bin")
    if space.positions is not None:
        manifest["embedding"] = {
            "positions": [[float(x), float(y)] for x, y in space.positions],
            "pinned": [int(i) for i in space.pinned],
        }
    if space.polylines is not None:
        edges = space.triangulation.edges
        _write_polylines(root / "polylines.bin", edges, space.polylines)
        payloads.append("polylines.bin")
    if space.fem is not None:
        _write_fem(root / "fem.bin", space.fem)
        payloads.append("fem.bin")
    if space.model is not None:
        _write_mlp(root / "mlp.bin", space.model.mlp)
        payloads.append("mlp.bin")
        manifest["mlp"] = {
            "layer_dims": space.model.mlp.layer_dims,
            "activation": space.model.mlp.activation,
            "encoding": {
                "L": space.model.encoding.L,
                "include_input": space.model.encoding.include_input,
            },
        }
    if space.switch_t is not None:
        edges = space.triangulation.edges
        plan = {
            "edges": [[int(u), int(v)] for u, v in edges],
            "t_star": [float(t) for t in space.switch_t],
        }
        (root / "switchplan.json").write_bytes(
            (json.dumps(plan, sort_keys=True, indent=2) + "\n").encode()
        )
        payloads.append("switchplan.json")

    manifest["checksums"] = {rel: _sha256(root / rel) for rel in sorted(payloads)}
    manifest_path = root / "manifest.json"
    manifest_path.write_bytes((json.dumps(manifest, sort_keys=True, indent=2) + "\n").encode())
    return manifest_path


def load(directory) -> SpaceBundle:
    """Load and validate a bundle directory."""
    root = Path(directory)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise BundleError(f"{root} is not a bundle (no manifest.json)")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise BundleError(f"{manifest_path}: invalid JSON: {exc}") from exc
    if manifest.get("format") != FORMAT:
        raise BundleError(f"{root} is not a bundle (format {manifest.get('format')!r})")
    if manifest.get("version") != VERSION:
        raise BundleError(
            f"unsupported bundle version {manifest.get('version')!r} (supported: {VERSION})"
        )
    for rel, digest in manifest.get("checksums", {}).items():
        path = root / rel
        if not path.exists():
            raise BundleError(f"bundle payload missing: {rel}")
        actual = _sha256(path)
        if actual != digest:
            raise BundleError(f"checksum mismatch for {rel}: {actual} != {digest}")

    weights_rel = manifest.get("generator_weights")
    if weights_rel:
        raw = np.fromfile(root / weights_rel, dtype="<f4").astype(np.float64)
        gen = make_generator(
            manifest["generator"], split_weight_blob(manifest["generator"], raw)
        )
    else:
        gen = make_generator(manifest["generator"])

    meshes, names = [], []
    for rec in manifest["landmarks"]:
        meshes.append(read_obj(root / rec["mesh"]))
        names.append(rec.get("name", rec["mesh"]))

    space = SpaceBundle(
        generator=gen,
        mesh_names=names,
        meshes=meshes,
        config=manifest.get("config", {}),
        seed=manifest.get("seed", 0),
        stages=list(manifest.get("stages", [])),
    )
    if (root / "latents.bin").exists():
        space.latents = _read_latents(root / "latents.bin")
    if "embedding" in manifest:
        space.positions = np.array(manifest["embedding"]["positions"], dtype=np.float64)
        space.pinned = [int(i) for i in manifest["embedding"]["pinned"]]
    tri = None
    if space.positions is not None and (root / "polylines.bin").exists():
        tri = delaunay(space.positions)
        space.polylines = _read_polylines(root / "polylines.bin", tri.edges)
    if (root / "fem.bin").exists():
        if tri is None:
            raise BundleError("fem.bin present but embedding/polylines missing")
        space.fem = _read_fem(root / "fem.bin", tri)
    if (root / "mlp.bin").exists():
        meta = manifest["mlp"]
        mlp = _read_mlp(root / "mlp.bin", meta["layer_dims"], meta["activation"])
        enc = Encoding(
            L=meta["encoding"]["L"],
            include_input=meta["encoding"]["include_input"],
            input_dim=2,
        )
        space.model = MapModel(mlp, enc, space.polylines, space.latents)
    if (root / "switchplan.json").exists():
        plan = json.loads((root / "switchplan.json").read_text())
        space.switch_t = np.array(plan["t_star"], dtype=np.float64)
    return space
