"""Place landmarks in the 2D exploration space.

Two stages: a triplet-margin embedding of the correspondence-distance
kNN graph pulls similar landmarks together, then a Delaunay-quality
refinement evens out triangle areas and opens up small interior angles
while pinning the convex hull (so the layout cannot collapse) and
finally snaps near-hull points onto the hull to kill sliver triangles.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, InvalidInputError, TrainingDivergedError
from .generator import Generator
from .geomcore import Triangulation2D, delaunay
from .smallnet import AdamState, adam_step

logger = logging.getLogger(__name__)

__all__ = [
    "NeighborGraph",
    "Embedding2D",
    "Stage1Config",
    "Stage2Config",
    "knn_graph",
    "triplet_loss",
    "embed_stage1",
    "embed_stage2",
]


@dataclass(frozen=True)
class NeighborGraph:
    """k nearest neighbors per landmark under correspondence distance."""

    k: int
    neighbors: np.ndarray  # (L, k) int, ascending by distance
    distances: np.ndarray  # (L, k)

    @property
    def count(self) -> int:
        return len(self.neighbors)


@dataclass(frozen=True)
class Embedding2D:
    positions: np.ndarray  # (L, 2)
    pinned: tuple = ()

    def __post_init__(self):
        p = np.ascontiguousarray(np.asarray(self.positions, dtype=np.float64))
        if p.ndim != 2 or p.shape[1] != 2 or not np.isfinite(p).all():
            raise InvalidInputError(f"bad embedding positions shape {p.shape}")
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "pinned", tuple(sorted(int(i) for i in self.pinned)))


def knn_graph(gen: Generator, latents, k: int) -> NeighborGraph:
    """kNN graph under the index-wise correspondence distance."""
    latents = np.asarray(latents, dtype=np.float64)
    n = len(latents)
    if not 1 <= k < n:
        raise InvalidInputError(f"k must be in [1, {n - 1}], got {k}")
    clouds = gen.forward_many(latents)
    # Pairwise sum of per-index Euclidean distances.
    diff = clouds[:, None, :, :] - clouds[None, :, :, :]
    dist = np.linalg.norm(diff, axis=3).sum(axis=2)
    neighbors = np.empty((n, k), dtype=np.int64)
    dists = np.empty((n, k))
    idx = np.arange(n)
    for i in range(n):
        order = np.lexsort((idx, dist[i]))
        order = order[order != i][:k]
        neighbors[i] = order
        dists[i] = dist[i, order]
    return NeighborGraph(k, neighbors, dists)


def triplet_loss(anchors, positives, negatives, alpha: float) -> float:
    """Sum of hinge terms max(|a-p|^2 - |a-n|^2 + alpha, 0)."""
    a = np.asarray(anchors, dtype=np.float64)
    p = np.asarray(positives, dtype=np.float64)
    n = np.asarray(negatives, dtype=np.float64)
    if a.shape != p.shape or a.shape != n.shape:
        raise InvalidInputError("triplet arrays must have equal shapes")
    terms = ((a - p) ** 2).sum(axis=-1) - ((a - n) ** 2).sum(axis=-1) + alpha
    return float(np.maximum(terms, 0.0).sum())


@dataclass(frozen=True)
class Stage1Config:
    iters: int = 600
    lr: float = 0.1
    alpha: float = 0.5
    seed: int = 0


def embed_stage1(graph: NeighborGraph, config: Stage1Config = Stage1Config()) -> Embedding2D:
    """Triplet-margin embedding of the neighbor graph into 2D.

    Per epoch, every (anchor, neighbor) pair gets one uniformly drawn
    non-neighbor negative (k*N triplets). The result is recentered and
    scaled to unit RMS radius, which is the scale the margin default is
    calibrated against.
    """
    n = graph.count
    rng = np.random.default_rng(config.seed)
    pos = rng.normal(size=(n, 2))
    if n == 1:
        return Embedding2D(pos)
    pos /= max(np.sqrt((pos**2).sum(axis=1).mean()), 1e-12)

    non_neighbors = []
    for i in range(n):
        mask = np.ones(n, dtype=bool)
        mask[i] = False
        mask[graph.neighbors[i]] = False
        non_neighbors.append(np.nonzero(mask)[0])
    # Anchors without any non-neighbor contribute no triplets (a fully
    # connected graph has nothing to push apart).
    keep = np.array([len(non_neighbors[i]) > 0 for i in range(n)])
    anchor_idx = np.repeat(np.nonzero(keep)[0], graph.k)
    pos_idx = graph.neighbors[keep].reshape(-1)
    if len(anchor_idx) == 0:
        return Embedding2D(pos)

    state = AdamState.like([pos])
    for it in range(config.iters):
        neg_idx = np.array([rng.choice(non_neighbors[i]) for i in anchor_idx])
        a, p, ng = pos[anchor_idx], pos[pos_idx], pos[neg_idx]
        terms = ((a - p) ** 2).sum(axis=1) - ((a - ng) ** 2).sum(axis=1) + config.alpha
        active = terms > 0.0
        loss = float(np.maximum(terms, 0.0).sum())
        if not np.isfinite(loss):
            raise TrainingDivergedError(f"stage-1 embedding diverged at iter {it}",
                                        iteration=it)
        grad = np.zeros_like(pos)
        aw, pw, nw = a[active], p[active], ng[active]
        np.add.at(grad, anchor_idx[active], 2.0 * (aw - pw) - 2.0 * (aw - nw))
        np.add.at(grad, pos_idx[active], -2.0 * (aw - pw))
        np.add.at(grad, neg_idx[active], 2.0 * (aw - nw))
        (pos,) = adam_step([pos], [grad], state, config.lr)

    pos = pos - pos.mean(axis=0)
    rms = np.sqrt((pos**2).sum(axis=1).mean())
    if rms > 1e-12:
        pos = pos / rms
    return Embedding2D(pos)


# ---------------------------------------------------------------------------
# Stage 2: Delaunay-quality refinement.


@dataclass(frozen=True)
class Stage2Config:
    lr: float = 0.005
    iters: int = 400
    area_weight: float = 1.0
    angle_weight: float = 1.0
    # Hinge threshold on the minimum interior angle, radians (20 degrees).
    angle_threshold: float = np.deg2rad(20.0)
    # Snap distance as a fraction of the bounding-box diagonal.
    snap_threshold: float = 0.02
    retriangulate_every: int = 10
    rel_tol: float = 1e-6
    # Accepted iterates may not push the global minimum interior angle
    # below its starting value by more than this.
    angle_audit_tol: float = 1e-6


def _triangle_angles(pos: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Interior angles (T, 3) at each triangle corner."""
    p = pos[tris]  # (T, 3, 2)
    angles = np.empty((len(tris), 3))
    for c in range(3):
        u = p[:, (c + 1) % 3] - p[:, c]
        v = p[:, (c + 2) % 3] - p[:, c]
        dot = (u * v).sum(axis=1)
        cr = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
        angles[:, c] = np.arctan2(np.abs(cr), dot)
    return angles


def _signed_areas(pos: np.ndarray, tris: np.ndarray) -> np.ndarray:
    a, b, c = pos[tris[:, 0]], pos[tris[:, 1]], pos[tris[:, 2]]
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                  - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


def _perp(v: np.ndarray) -> np.ndarray:
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def stage2_loss_grad(pos: np.ndarray, tris: np.ndarray, config: Stage2Config):
    """Area-variance plus min-angle hinge loss and its position gradient."""
    areas = _signed_areas(pos, tris)
    mean_area = areas.mean()
    dev = areas - mean_area
    loss_area = float((dev**2).sum())

    angles = _triangle_angles(pos, tris)
    min_idx = np.argmin(angles, axis=1)
    min_ang = angles[np.arange(len(tris)), min_idx]
    hinge = np.maximum(config.angle_threshold - min_ang, 0.0)
    loss_angle = float((hinge**2).sum())

    grad = np.zeros_like(pos)
    # Area term: d area_f / dA = perp(C - B) / 2, cyclically.
    coef = config.area_weight * 2.0 * dev  # (T,)
    pa, pb, pc = pos[tris[:, 0]], pos[tris[:, 1]], pos[tris[:, 2]]
    np.add.at(grad, tris[:, 0], coef[:, None] * _perp(pc - pb) * 0.5)
    np.add.at(grad, tris[:, 1], coef[:, None] * _perp(pa - pc) * 0.5)
    np.add.at(grad, tris[:, 2], coef[:, None] * _perp(pb - pa) * 0.5)

    # Angle term: only the minimum-angle corner of hinged triangles moves.
    act = hinge > 0.0
    if act.any():
        coef_a = -2.0 * config.angle_weight * hinge[act]  # d hinge^2 / d angle
        for f, c, w in zip(np.nonzero(act)[0], min_idx[act], coef_a):
            i, j, k = tris[f, c], tris[f, (c + 1) % 3], tris[f, (c + 2) % 3]
            u = pos[j] - pos[i]
            v = pos[k] - pos[i]
            wz = u[0] * v[1] - u[1] * v[0]
            q = u @ v
            denom = (u @ u) * (v @ v)
            sign = 1.0 if wz >= 0 else -1.0
            # theta = atan2(|cross|, dot); gradients of atan2(w, q).
            gu = sign * (q * -_perp(v) - wz * v) / denom
            gv = sign * (q * _perp(u) - wz * u) / denom
            grad[j] += w * gu
            grad[k] += w * gv
            grad[i] += -w * (gu + gv)
    return config.area_weight * loss_area + loss_angle * config.angle_weight, grad


def _safe_delaunay(pos: np.ndarray) -> Triangulation2D | None:
    try:
        return delaunay(pos)
    except DegenerateInputError:
        return None


def embed_stage2(emb: Embedding2D, config: Stage2Config = Stage2Config()) -> Embedding2D:
    """Refine an embedding toward uniform, well-angled Delaunay facets.

    Convex-hull landmarks are pinned bit-identically. A candidate step is
    accepted only if the retriangulated layout stays non-degenerate and
    its global minimum interior angle does not fall below the starting
    minimum (within tolerance); rejected steps retry at half step scale.
    Afterwards, points within the snap threshold of the hull are moved
    onto it.
    """
    pos = emb.positions.copy()
    if len(pos) < 3:
        raise InvalidInputError("stage 2 needs >= 3 landmarks")
    tri = delaunay(pos)
    pinned = np.array(sorted(int(i) for i in tri.hull), dtype=np.int64)
    free_mask = np.ones(len(pos), dtype=bool)
    free_mask[pinned] = False
    if not free_mask.any():
        return Embedding2D(pos, pinned=tuple(pinned))

    baseline_angle = _triangle_angles(pos, tri.triangles).min()
    state = AdamState.like([pos])
    prev_loss = None
    loss_tris = tri.triangles
    for it in range(config.iters):
        if it > 0 and it % config.retriangulate_every == 0:
            fresh = _safe_delaunay(pos)
            if fresh is not None:
                loss_tris = fresh.triangles
        loss, grad = stage2_loss_grad(pos, loss_tris, config)
        if not np.isfinite(loss):
            raise TrainingDivergedError(f"stage-2 embedding diverged at iter {it}",
                                        iteration=it)
        grad[~free_mask] = 0.0
        accepted = False
        scale = 1.0
        for _ in range(20):
            saved = (pos.copy(), [m.copy() for m in state.m],
                     [v.copy() for v in state.v], state.t)
            (cand,) = adam_step([pos], [grad], state, config.lr * scale)
            cand_tri = _safe_delaunay(cand)
            if cand_tri is not None:
                cand_min = _triangle_angles(cand, cand_tri.triangles).min()
                if cand_min >= baseline_angle - config.angle_audit_tol:
                    pos = cand
                    accepted = True
                    break
            pos, state.m, state.v, state.t = saved
            scale *= 0.5
        if not accepted:
            logger.warning("stage-2 step rejected 20 times at iter %d; stopping", it)
            break
        if prev_loss is not None and abs(prev_loss - loss) <= config.rel_tol * max(
            abs(prev_loss), 1e-30
        ):
            logger.info("stage-2 converged at iter %d (loss %.3e)", it, loss)
            break
        prev_loss = loss

    pos = _snap_to_hull(pos, pinned, free_mask, config.snap_threshold)
    if _safe_delaunay(pos) is None:
        raise DegenerateInputError("stage-2 result is degenerate after snapping")
    return Embedding2D(pos, pinned=tuple(pinned))


def _snap_to_hull(pos, pinned, free_mask, snap_fraction):
    """Move free points within the snap distance of the hull onto it."""
    tri = _safe_delaunay(pos)
    if tri is None:
        return pos
    ring = tri.hull
    bbox = pos.max(axis=0) - pos.min(axis=0)
    threshold = snap_fraction * float(np.hypot(bbox[0], bbox[1]))
    out = pos.copy()
    segs = [(pos[ring[i]], pos[ring[(i + 1) % len(ring)]]) for i in range(len(ring))]
    for i in np.nonzero(free_mask)[0]:
        best = None
        for a, b in segs:
            ab = b - a
            denom = ab @ ab
            if denom <= 0:
                continue
            t = float(np.clip((pos[i] - a) @ ab / denom, 0.0, 1.0))
            proj = a + t * ab
            d = float(np.hypot(*(pos[i] - proj)))
            if best is None or d < best[0]:
                best = (d, proj)
        if best is not None and 0.0 < best[0] <= threshold:
            # Refuse snaps that would collide with an existing point.
            if np.min(np.linalg.norm(out - best[1], axis=1)) > 1e-9:
                out[i] = best[1]
    return out
