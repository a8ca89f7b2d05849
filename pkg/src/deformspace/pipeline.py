"""Stage-by-stage pipeline over a space bundle.

Each stage validates its prerequisites, fills in the corresponding part
of the bundle, and records itself in the stage list. Stages are pure
functions of (bundle contents, config, seed), so rerunning the pipeline
with one seed reproduces the bundle byte for byte.
"""

from __future__ import annotations

import csv
import logging
from pathlib import Path

import numpy as np

from .bundle import SpaceBundle
from .deform import compute_switch_point, deform_along, remap_edge
from .embedding import Stage1Config, Stage2Config, embed_stage1, embed_stage2, knn_graph
from .errors import InvalidInputError, OutsideDomainError
from .generator import generator_from_config
from .geodesic import GeodesicConfig, GeodesicPolyline, optimize_geodesic, path_energy
from .geomcore import locate, read_obj
from .projection import ProjectionSchedule, project
from .submanifold import (
    TrainMapConfig,
    density_for_face_target,
    discretize,
    infer,
    train_map,
)

logger = logging.getLogger(__name__)

__all__ = [
    "create_space",
    "run_project",
    "run_embed",
    "run_geodesics",
    "run_train_map",
    "run_switchpoints",
    "run_deform",
    "run_energy_report",
]


def create_space(config: dict, base_dir=None) -> SpaceBundle:
    """Build an empty bundle from a pipeline config (generator + meshes)."""
    if "generator" not in config or "meshes" not in config:
        raise InvalidInputError("config needs 'generator' and 'meshes' entries")
    gen = generator_from_config(config["generator"])
    base = Path(base_dir) if base_dir is not None else Path(".")
    meshes, names = [], []
    for rel in config["meshes"]:
        path = base / rel
        if not path.exists():
            raise InvalidInputError(f"landmark mesh not found: {path}")
        meshes.append(read_obj(path))
        names.append(rel)
    if len(meshes) < 3:
        raise InvalidInputError("a space needs >= 3 landmark meshes")
    return SpaceBundle(
        generator=gen,
        mesh_names=names,
        meshes=meshes,
        config=config,
        seed=int(config.get("seed", 0)),
    )


def _mark(space: SpaceBundle, stage: str) -> None:
    if stage not in space.stages:
        space.stages.append(stage)


def run_project(space: SpaceBundle) -> SpaceBundle:
    """Project every landmark mesh into the generator's latent space."""
    cfg = dict(space.config.get("projection", {}))
    schedule = ProjectionSchedule(
        sample_counts=cfg.get("sample_counts", [2048, 4096, 8192, 16384, 32768]),
        iters_per_stage=cfg.get("iters_per_stage", 800),
        lr=cfg.get("lr", 0.01),
        seed=space.seed,
    )
    latents = np.empty((space.landmark_count, space.generator.latent_dim))
    for i, mesh in enumerate(space.meshes):
        z, loss = project(space.generator, mesh, schedule)
        latents[i] = z
        logger.info("landmark %d projected, chamfer %.3e", i, loss)
    space.latents = latents
    _mark(space, "project")
    return space


def run_embed(space: SpaceBundle) -> SpaceBundle:
    space.require("project")
    cfg = dict(space.config.get("embedding", {}))
    # Leave at least two non-neighbors so triplets have real negatives.
    k = int(cfg.get("k", max(1, min(5, space.landmark_count - 3))))
    graph = knn_graph(space.generator, space.latents, k)
    s1 = embed_stage1(
        graph,
        Stage1Config(
            iters=int(cfg.get("stage1_iters", 600)),
            lr=float(cfg.get("stage1_lr", 0.1)),
            alpha=float(cfg.get("alpha", 0.5)),
            seed=space.seed,
        ),
    )
    s2 = embed_stage2(
        s1,
        Stage2Config(
            lr=float(cfg.get("stage2_lr", 0.005)),
            iters=int(cfg.get("stage2_iters", 400)),
            area_weight=float(cfg.get("area_weight", 1.0)),
            angle_weight=float(cfg.get("angle_weight", 1.0)),
        ),
    )
    space.positions = s2.positions
    space.pinned = list(s2.pinned)
    _mark(space, "embed")
    return space


def run_geodesics(space: SpaceBundle) -> SpaceBundle:
    space.require("embed")
    cfg = dict(space.config.get("geodesics", {}))
    gcfg = GeodesicConfig(
        init_nodes=int(cfg.get("init_nodes", 8)),
        subdivide_every=int(cfg.get("subdivide_every", 100)),
        max_nodes=int(cfg.get("max_nodes", 64)),
        iters=int(cfg.get("iters", 400)),
        lr=float(cfg.get("lr", 0.01)),
        seed=space.seed,
    )
    tri = space.triangulation
    polylines = []
    for u, v in tri.edges:
        poly = optimize_geodesic(space.generator, space.latents[u], space.latents[v], gcfg)
        polylines.append(poly)
        logger.info("edge (%d, %d) geodesic energy %.4e", u, v,
                    path_energy(space.generator, poly))
    space.polylines = polylines
    _mark(space, "geodesics")
    return space


def run_train_map(space: SpaceBundle) -> SpaceBundle:
    space.require("geodesics")
    cfg = dict(space.config.get("trainmap", {}))
    tri = space.triangulation
    density = cfg.get("density")
    if density is None:
        density = density_for_face_target(tri, int(cfg.get("face_target", 2000)))
    space.fem = discretize(tri, float(density))
    tcfg = TrainMapConfig(
        lr=float(cfg.get("lr", 3e-4)),
        batch_faces=int(cfg.get("batch_faces", 256)),
        iters=int(cfg.get("iters", 20000)),
        seed=space.seed,
        width=int(cfg.get("width", 256)),
        hidden_layers=int(cfg.get("hidden_layers", 4)),
        encoding_L=int(cfg.get("encoding_L", 5)),
        include_input=bool(cfg.get("include_input", True)),
        plateau_window=int(cfg.get("plateau_window", 1000)),
        plateau_rel=float(cfg.get("plateau_rel", 1e-3)),
        cosine_decay=bool(cfg.get("cosine_decay", False)),
    )
    model, trace = train_map(space.generator, space.fem, space.polylines,
                             space.latents, tcfg)
    logger.info("map trained: %d batches, loss %.4e -> %.4e",
                len(trace), trace[0] if trace else 0.0, trace[-1] if trace else 0.0)
    space.model = model
    _mark(space, "train-map")
    return space


def run_switchpoints(space: SpaceBundle) -> SpaceBundle:
    space.require("train-map")
    cfg = dict(space.config.get("switchpoints", {}))
    dcfg = dict(space.config.get("deform", {}))
    tri = space.triangulation
    t_star = np.empty(len(tri.edges))
    for ei, (u, v) in enumerate(tri.edges):
        t_star[ei] = compute_switch_point(
            space.generator, space.model, space.fem,
            (int(u), int(v)), (space.meshes[u], space.meshes[v]),
            grid=int(cfg.get("grid", 31)),
            smoothing=float(dcfg.get("smoothing", 15.0)),
            steps=int(cfg.get("steps", 200)),
            chamfer_samples=int(cfg.get("chamfer_samples", 2048)),
            seed=space.seed,
        )
        logger.info("edge (%d, %d) switch point t* = %.3f", u, v, t_star[ei])
    space.switch_t = t_star
    space.polylines = [remap_edge(p, t) for p, t in zip(space.polylines, t_star)]
    # The map model shares the polyline table; rebind to the warped ones.
    space.model.boundary_table = space.polylines
    _mark(space, "switchpoints")
    return space


def run_deform(space: SpaceBundle, landmark: int, path, steps=None,
               smoothing=None) -> list:
    """Deform a landmark mesh along a 2D path; returns all frames."""
    space.require("train-map")
    dcfg = dict(space.config.get("deform", {}))
    path = np.asarray(path, dtype=np.float64).reshape(-1, 2)
    if len(path) < 2:
        raise InvalidInputError("deformation path needs >= 2 points (zero-length trajectory)")
    if not 0 <= landmark < space.landmark_count:
        raise InvalidInputError(f"no landmark {landmark}")
    return deform_along(
        space.generator, space.model, space.fem, space.meshes[landmark], path,
        steps=int(steps if steps is not None else dcfg.get("steps", 180)),
        smoothing=float(smoothing if smoothing is not None else dcfg.get("smoothing", 15.0)),
    )


def _clip_to_hull(tri, start: np.ndarray, direction: np.ndarray, length: float) -> np.ndarray:
    """Endpoint of start + t*direction staying inside the hull, t <= length."""
    ring = tri.sites[tri.hull]
    t_max = length
    m = len(ring)
    for i in range(m):
        a, b = ring[i], ring[(i + 1) % m]
        edge = b - a
        n = np.array([edge[1], -edge[0]])  # outward for CCW ring
        denom = n @ direction
        if denom > 1e-15:
            t_hit = (n @ (a - start)) / denom
            # Tiny shrink keeps the clipped endpoint strictly inside.
            t_max = min(t_max, max(t_hit * (1.0 - 1e-9), 0.0))
    return start + t_max * direction


def _resample_by_arclength(points: np.ndarray, count: int) -> np.ndarray:
    """Resample a polyline in R^D to ``count`` nodes, uniform by arc length."""
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    if cum[-1] <= 0.0:
        return np.repeat(points[:1], count, axis=0)
    targets = np.linspace(0.0, cum[-1], count)
    idx = np.clip(np.searchsorted(cum, targets, side="right") - 1, 0, len(seg) - 1)
    frac = (targets - cum[idx]) / np.maximum(seg[idx], 1e-300)
    out = points[idx] + frac[:, None] * (points[idx + 1] - points[idx])
    out[0] = points[0]
    out[-1] = points[-1]
    return out


def run_energy_report(space: SpaceBundle, out_csv=None, n_paths: int = 100,
                      nodes: int = 64, seed=None) -> dict:
    """Sampled-path energy comparison: trained map vs latent-space baselines.

    Paths are random segments (length half a random facet's bbox
    diagonal, start uniform in the hull, direction uniform, clipped to
    the hull). For each path we report the primal Dirichlet-style
    energy of: the trained map along the path ("ours"), the straight
    latent segment between the path endpoints' latents ("z_linear"),
    and an optimized geodesic between them ("z_opt"), all discretized
    at the same node count.
    """
    space.require("train-map")
    rng = np.random.default_rng(space.seed if seed is None else seed)
    tri = space.triangulation
    p = tri.sites
    t = tri.triangles
    areas = 0.5 * np.abs(
        (p[t[:, 1]] - p[t[:, 0]])[:, 0] * (p[t[:, 2]] - p[t[:, 0]])[:, 1]
        - (p[t[:, 1]] - p[t[:, 0]])[:, 1] * (p[t[:, 2]] - p[t[:, 0]])[:, 0]
    )
    facet_probs = areas / areas.sum()
    lo, hi = p.min(axis=0), p.max(axis=0)

    rows = []
    while len(rows) < n_paths:
        facet = rng.choice(len(t), p=facet_probs)
        corners = p[t[facet]]
        bbox = corners.max(axis=0) - corners.min(axis=0)
        length = 0.5 * float(np.hypot(bbox[0], bbox[1]))
        start = rng.uniform(lo, hi)
        if locate(tri, start) is None:
            continue
        theta = rng.uniform(0.0, 2.0 * np.pi)
        direction = np.array([np.cos(theta), np.sin(theta)])
        end = _clip_to_hull(tri, start, direction, length)
        if np.linalg.norm(end - start) < 0.05 * length:
            continue
        # Trace the map's primal image densely, then discretize it at
        # uniform primal speed: the latent-space columns get to place
        # their polyline nodes freely, so the map path is discretized at
        # its own minimal-energy parameterization for a like comparison.
        dense_n = 4 * nodes
        samples = start[None, :] + np.linspace(0, 1, dense_n)[:, None] * (end - start)[None, :]
        clouds = []
        lats = []
        try:
            for q in samples:
                z, c = infer(space.generator, space.model, space.fem, q)
                lats.append(z)
                clouds.append(c.points.reshape(-1))
        except OutsideDomainError:
            continue
        clouds = np.array(clouds)
        ours = float((np.diff(_resample_by_arclength(clouds, nodes), axis=0) ** 2).sum())
        za, zb = lats[0], lats[-1]
        lin = GeodesicPolyline(
            (1 - np.linspace(0, 1, nodes)[:, None]) * za + np.linspace(0, 1, nodes)[:, None] * zb
        )
        z_linear = path_energy(space.generator, lin)
        gcfg = GeodesicConfig(max_nodes=nodes, seed=space.seed)
        z_opt = path_energy(
            space.generator, optimize_geodesic(space.generator, za, zb, gcfg)
        )
        rows.append((len(rows), ours, z_linear, z_opt))

    summary = {
        "mean_ours": float(np.mean([r[1] for r in rows])),
        "mean_z_linear": float(np.mean([r[2] for r in rows])),
        "mean_z_opt": float(np.mean([r[3] for r in rows])),
        "paths": len(rows),
    }
    if out_csv is not None:
        with open(out_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["path", "ours", "z_linear", "z_opt"])
            for row in rows:
                writer.writerow([row[0], f"{row[1]!r}", f"{row[2]!r}", f"{row[3]!r}"])
    logger.info("energy report: ours %.4f, z-linear %.4f, z-opt %.4f",
                summary["mean_ours"], summary["mean_z_linear"], summary["mean_z_opt"])
    return summary
