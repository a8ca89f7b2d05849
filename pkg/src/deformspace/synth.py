"""Synthetic desk-scale spaces: analytic landmark meshes and demo configs.

The synthetic generator families make every pipeline stage verifiable
without any pre-trained network: bump-ellipsoid landmark meshes are
built from the same radial profile the generator evaluates, so a
projected latent reproduces the mesh surface almost exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .generator import BumpEllipsoidGenerator, Generator, generator_from_config
from .geomcore import TriMesh, write_obj

__all__ = [
    "icosphere",
    "ellipsoid_mesh",
    "bump_ellipsoid_mesh",
    "demo_latents",
    "landmark_mesh",
    "write_demo_space",
]


def icosphere(subdivisions: int = 3) -> TriMesh:
    """Unit sphere from a subdivided octahedron (deterministic, no RNG)."""
    verts = [
        (1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1),
    ]
    faces = [
        (0, 2, 4), (2, 1, 4), (1, 3, 4), (3, 0, 4),
        (2, 0, 5), (1, 2, 5), (3, 1, 5), (0, 3, 5),
    ]
    verts = [np.array(v, dtype=np.float64) for v in verts]
    for _ in range(subdivisions):
        midpoint = {}
        new_faces = []

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in midpoint:
                m = verts[i] + verts[j]
                m /= np.linalg.norm(m)
                verts.append(m)
                midpoint[key] = len(verts) - 1
            return midpoint[key]

        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
        faces = new_faces
    v = np.array(verts)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return TriMesh(v, np.array(faces, dtype=np.int64))


def ellipsoid_mesh(scales, subdivisions: int = 3) -> TriMesh:
    sphere = icosphere(subdivisions)
    return sphere.with_vertices(sphere.vertices * np.asarray(scales, dtype=np.float64))


def bump_ellipsoid_mesh(gen: BumpEllipsoidGenerator, z, subdivisions: int = 3) -> TriMesh:
    """Mesh whose surface lies on the bump-ellipsoid locus at latent z."""
    sphere = icosphere(subdivisions)
    return sphere.with_vertices(gen.surface_points(sphere.vertices, z))


def demo_latents(gen: Generator, count: int, seed: int = 0, spread: float = 0.7) -> np.ndarray:
    """Well-separated landmark latents appropriate for the family.

    Frozen-net landmarks go on a latent shell of radius ``spread``: with
    a saturating net the shell is the calm region, so straight chords
    between landmarks dip through the high-variation center, which is
    the regime the trained map is supposed to improve on.
    """
    rng = np.random.default_rng(seed)
    if gen.family == "bump-ellipsoid":
        z = np.zeros((count, gen.latent_dim))
        z[:, :3] = rng.uniform(0.75, 1.35, size=(count, 3))
        z[:, 3:] = rng.uniform(-spread, spread, size=(count, gen.latent_dim - 3))
        return z
    if gen.family == "frozen-net":
        z = rng.normal(size=(count, gen.latent_dim))
        return spread * z / np.linalg.norm(z, axis=1, keepdims=True)
    return rng.normal(scale=spread, size=(count, gen.latent_dim))


def landmark_mesh(gen: Generator, z, subdivisions: int = 3) -> TriMesh:
    """A landmark mesh for a latent: exact locus for bump-ellipsoid,
    a nominal ellipsoid otherwise (projection then decides the latent)."""
    if isinstance(gen, BumpEllipsoidGenerator):
        return bump_ellipsoid_mesh(gen, z, subdivisions)
    z = np.asarray(z, dtype=np.float64)
    scales = 1.0 + 0.25 * np.tanh(z[:3]) if len(z) >= 3 else np.ones(3)
    return ellipsoid_mesh(scales, subdivisions)


def write_demo_space(out_dir, gen_config: dict, count: int = 6, seed: int = 0,
                     subdivisions: int = 3, config_overrides: dict | None = None) -> Path:
    """Write landmark meshes plus a pipeline config; returns the config path."""
    if count < 3:
        raise InvalidInputError("a demo space needs >= 3 landmarks")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    gen = generator_from_config(gen_config)
    latents = demo_latents(gen, count, seed=seed)
    mesh_paths = []
    for i, z in enumerate(latents):
        rel = f"mesh_{i:03d}.obj"
        write_obj(landmark_mesh(gen, z, subdivisions), out / rel)
        mesh_paths.append(rel)
    config = {
        "seed": seed,
        "generator": dict(gen_config),
        "meshes": mesh_paths,
        "projection": {
            "sample_counts": [512, 1024, 2048],
            "iters_per_stage": 120,
            "lr": 0.02,
        },
        "embedding": {"k": max(1, min(5, count - 3))},
        "geodesics": {"iters": 400},
        "trainmap": {"iters": 1500, "width": 64, "face_target": 600,
                     "plateau_window": 0, "cosine_decay": True},
        "switchpoints": {"steps": 200, "chamfer_samples": 1024},
        "deform": {"smoothing": 15.0, "steps": 180},
    }
    if config_overrides:
        config.update(config_overrides)
    path = out / "space.json"
    path.write_text(json.dumps(config, sort_keys=True, indent=2) + "\n")
    return path
