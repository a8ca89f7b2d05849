"""Project landmark meshes into a generator's latent space.

Minimizes the symmetric Chamfer distance between the generator output
and a surface sampling of the mesh, coarse-to-fine: the mesh-side target
is resampled denser at every stage, which is what keeps the optimization
out of the local minima a single dense sampling falls into.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidInputError, TrainingDivergedError
from .generator import Generator
from .geomcore import PointCloud, TriMesh, sample_surface
from .smallnet import AdamState, adam_step

logger = logging.getLogger(__name__)

__all__ = ["ProjectionSchedule", "project", "project_cloud", "chamfer_with_grad"]


def _default_counts():
    return [2048, 4096, 8192, 16384, 32768]


@dataclass(frozen=True)
class ProjectionSchedule:
    """Coarse-to-fine schedule: target sample counts and iterations per stage."""

    sample_counts: list = field(default_factory=_default_counts)
    iters_per_stage: int = 800
    lr: float = 0.01
    seed: int = 0

    def __post_init__(self):
        counts = list(self.sample_counts)
        if any(b <= a for a, b in zip(counts, counts[1:])):
            raise InvalidInputError("sample counts must be strictly increasing")
        if self.iters_per_stage < 1:
            raise InvalidInputError("iters_per_stage must be >= 1")


def chamfer_with_grad(cloud: np.ndarray, target: np.ndarray):
    """Symmetric mean-of-squares Chamfer and its gradient w.r.t. ``cloud``.

    Nearest-neighbor assignments are treated as locally constant, the
    standard subgradient for Chamfer losses.
    """
    na, nb = len(cloud), len(target)
    d_ab, j_ab = cKDTree(target).query(cloud)
    d_ba, j_ba = cKDTree(cloud).query(target)
    loss = float(np.mean(d_ab**2) + np.mean(d_ba**2))
    grad = 2.0 * (cloud - target[j_ab]) / na
    np.add.at(grad, j_ba, 2.0 * (cloud[j_ba] - target) / nb)
    return loss, grad


def project_cloud(gen: Generator, target, iters: int, lr: float = 0.01,
                  z0=None, iter_offset: int = 0) -> tuple[np.ndarray, float]:
    """Chamfer-minimize the generator output against one fixed target cloud.

    Adam with cosine learning-rate decay and best-iterate tracking, so
    the returned loss never exceeds the loss at ``z0``.
    """
    pts = target.points if isinstance(target, PointCloud) else np.asarray(target, float)
    if z0 is None:
        z0 = np.zeros(gen.latent_dim)
    z = np.asarray(z0, dtype=np.float64).reshape(-1).copy()
    if z.shape != (gen.latent_dim,):
        raise InvalidInputError(f"z0 must have dimension {gen.latent_dim}")
    state = AdamState.like([z])
    best_loss, _ = chamfer_with_grad(gen.forward(z).points, pts)
    best_z = z.copy()
    for it in range(iters):
        cloud = gen.forward(z).points
        # Guard before the kd-tree: squared distances overflow above ~1e154.
        if not np.isfinite(cloud).all() or np.abs(cloud).max() > 1e150:
            raise TrainingDivergedError(
                f"projection diverged at iteration {iter_offset + it}",
                iteration=iter_offset + it,
            )
        loss, grad_cloud = chamfer_with_grad(cloud, pts)
        if not np.isfinite(loss):
            raise TrainingDivergedError(
                f"projection diverged at iteration {iter_offset + it}",
                iteration=iter_offset + it,
            )
        if loss < best_loss:
            best_loss = loss
            best_z = z.copy()
        g = gen.vjp(z, grad_cloud.reshape(gen.point_count, 3))
        decayed = lr * 0.5 * (1.0 + np.cos(np.pi * it / iters))
        (z,) = adam_step([z], [g], state, decayed)
    loss, _ = chamfer_with_grad(gen.forward(z).points, pts)
    if loss < best_loss:
        best_loss = loss
        best_z = z.copy()
    return best_z, float(best_loss)


def project(gen: Generator, mesh: TriMesh, schedule: ProjectionSchedule,
            z0=None) -> tuple[np.ndarray, float]:
    """Recover the latent whose generated cloud best matches ``mesh``.

    Coarse-to-fine: the mesh-side target is resampled denser at each
    stage boundary with a stage-specific seed (the generator output size
    is fixed, so only the mesh side resamples). Best-iterate tracking
    makes the per-stage loss log nonincreasing at stage granularity.
    Deterministic for a fixed schedule seed.
    """
    z = np.zeros(gen.latent_dim) if z0 is None else np.asarray(z0, dtype=np.float64)
    final_loss = np.inf
    for stage, count in enumerate(schedule.sample_counts):
        target = sample_surface(mesh, count, seed=(schedule.seed, stage))
        z, final_loss = project_cloud(
            gen, target, schedule.iters_per_stage, lr=schedule.lr, z0=z,
            iter_offset=stage * schedule.iters_per_stage,
        )
        logger.info("projection stage %d (%d samples): loss %.3e", stage, count, final_loss)
    return z, float(final_loss)
