"""Energy-minimizing map from the 2D exploration space onto the generator manifold.

The exploration space (a Delaunay triangulation of landmark positions)
is densely subdivided into a FEM mesh. A map from 2D to latent space is
trained to minimize the discretized Dirichlet energy of the lifted
surface, with geodesic polylines supplying hard boundary values on
every Delaunay edge: FEM vertices on edges and at landmarks never read
the MLP, so the boundary cannot drift and facets stitch exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from scipy.spatial import Delaunay as _SciDelaunay

from .errors import InvalidInputError, OutsideDomainError, TrainingDivergedError
from .generator import Generator
from .geodesic import GeodesicPolyline, eval_polyline
from .geomcore import PointCloud, Triangulation2D, delaunay, locate
from .smallnet import AdamState, Encoding, MlpParams, adam_step, encode, mlp_backward, mlp_init, mlp_forward

logger = logging.getLogger(__name__)

__all__ = [
    "FemMesh",
    "MapModel",
    "TrainMapConfig",
    "discretize",
    "density_for_face_target",
    "eval_map",
    "eval_map_many",
    "face_jacobian",
    "dirichlet_energy",
    "dirichlet_energy_of_values",
    "barycentric_latents",
    "train_map",
    "fem_locate",
    "infer",
]

TAG_INTERIOR = 0
TAG_BOUNDARY = 1
TAG_LANDMARK = 2


@dataclass(frozen=True)
class FemMesh:
    """Dense triangulation of the exploration space with vertex provenance tags.

    Vertices are tagged interior, boundary (Delaunay edge id + parameter
    t in canonical edge orientation, from the lower site index), or
    landmark. Boundary vertices on a shared Delaunay edge are single
    vertices referenced from both facets, which is what guarantees exact
    stitching of the lifted surface.
    """

    vertices: np.ndarray       # (M, 2) f64
    faces: np.ndarray          # (F, 3) int64
    tag_kind: np.ndarray       # (M,) i8
    tag_edge: np.ndarray       # (M,) i32, -1 unless boundary
    tag_t: np.ndarray          # (M,) f64, 0 unless boundary
    tag_landmark: np.ndarray   # (M,) i32, -1 unless landmark
    facet_of_face: np.ndarray  # (F,) i32, Delaunay facet per FEM face
    vertex_facet: np.ndarray   # (M,) i32, owning facet for interior vertices
    base: Triangulation2D
    face_area: np.ndarray = field(default=None, repr=False, compare=False)
    inv_edge: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        v, f = self.vertices, self.faces
        p1 = v[f[:, 0]]
        e = np.stack([v[f[:, 1]] - p1, v[f[:, 2]] - p1], axis=2)
        areas = 0.5 * (e[:, 0, 0] * e[:, 1, 1] - e[:, 1, 0] * e[:, 0, 1])
        if (areas <= 0).any():
            raise InvalidInputError("FEM mesh has non-positive face areas")
        object.__setattr__(self, "face_area", areas)
        object.__setattr__(self, "inv_edge", np.linalg.inv(e))

    @property
    def interior_mask(self) -> np.ndarray:
        return self.tag_kind == TAG_INTERIOR


def density_for_face_target(tri: Triangulation2D, target_faces: int) -> float:
    """Density (elements per unit area) that yields ~target_faces in total."""
    p = tri.sites
    t = tri.triangles
    areas = 0.5 * np.abs(
        (p[t[:, 1]] - p[t[:, 0]])[:, 0] * (p[t[:, 2]] - p[t[:, 0]])[:, 1]
        - (p[t[:, 1]] - p[t[:, 0]])[:, 1] * (p[t[:, 2]] - p[t[:, 0]])[:, 0]
    )
    return float(target_faces / areas.sum())


def discretize(tri: Triangulation2D, density: float) -> FemMesh:
    """Subdivide each Delaunay facet into ~density*area uniform elements.

    Facets use regular k-fold edge subdivision with k = round(sqrt(
    density * area)). A shared edge always receives one vertex sequence:
    its subdivision count is the max over adjacent facets, and a facet
    whose own k disagrees with an edge count falls back to triangulating
    its boundary chain plus interior lattice locally.
    """
    sites, tris, edges = tri.sites, tri.triangles, tri.edges
    p = sites
    facet_areas = 0.5 * np.abs(
        (p[tris[:, 1]] - p[tris[:, 0]])[:, 0] * (p[tris[:, 2]] - p[tris[:, 0]])[:, 1]
        - (p[tris[:, 1]] - p[tris[:, 0]])[:, 1] * (p[tris[:, 2]] - p[tris[:, 0]])[:, 0]
    )
    k_facet = np.maximum(1, np.rint(np.sqrt(density * facet_areas)).astype(int))

    edge_ids = tri.edge_index
    edge_count = np.ones(len(edges), dtype=int)
    for fi, t in enumerate(tris):
        for a, b in ((0, 1), (1, 2), (2, 0)):
            e = edge_ids[tuple(sorted((int(t[a]), int(t[b]))))]
            edge_count[e] = max(edge_count[e], k_facet[fi])

    verts = [p[i].copy() for i in range(len(sites))]
    tag_kind = [TAG_LANDMARK] * len(sites)
    tag_edge = [-1] * len(sites)
    tag_t = [0.0] * len(sites)
    tag_landmark = list(range(len(sites)))
    vertex_facet = [-1] * len(sites)

    def new_vertex(pos, kind, edge=-1, t=0.0, lm=-1, facet=-1):
        verts.append(np.asarray(pos, dtype=np.float64))
        tag_kind.append(kind)
        tag_edge.append(edge)
        tag_t.append(t)
        tag_landmark.append(lm)
        vertex_facet.append(facet)
        return len(verts) - 1

    # One vertex sequence per Delaunay edge, in canonical (u < v) orientation.
    edge_points: list[list[int]] = []
    for ei, (u, v) in enumerate(edges):
        n = edge_count[ei]
        ids = []
        for s in range(1, n):
            t = s / n
            pos = (1.0 - t) * sites[u] + t * sites[v]
            ids.append(new_vertex(pos, TAG_BOUNDARY, edge=ei, t=t))
        edge_points.append(ids)

    faces = []
    facet_of_face = []

    def edge_vertex(u, v, step, count):
        """Global id of point `step` of `count` along directed edge u -> v."""
        if step == 0:
            return int(u)
        if step == count:
            return int(v)
        cu, cv = (int(u), int(v)) if u < v else (int(v), int(u))
        ei = edge_ids[(cu, cv)]
        ids = edge_points[ei]
        return ids[step - 1] if u < v else ids[count - step - 1]

    for fi, t in enumerate(tris):
        i0, i1, i2 = (int(x) for x in t)
        k = int(k_facet[fi])
        counts = [
            edge_count[edge_ids[tuple(sorted((i0, i1)))]],
            edge_count[edge_ids[tuple(sorted((i1, i2)))]],
            edge_count[edge_ids[tuple(sorted((i2, i0)))]],
        ]
        p0, p1, p2 = sites[i0], sites[i1], sites[i2]
        if counts == [k, k, k]:
            # Fast path: regular k-fold subdivision, lattice (a, b), a+b <= k.
            lattice = {}
            for a in range(k + 1):
                for b in range(k + 1 - a):
                    c = k - a - b
                    if c == k:
                        vid = i0
                    elif a == k:
                        vid = i1
                    elif b == k:
                        vid = i2
                    elif b == 0:
                        vid = edge_vertex(i0, i1, a, k)
                    elif a == 0:
                        vid = edge_vertex(i0, i2, b, k)
                    elif c == 0:
                        vid = edge_vertex(i1, i2, b, k)
                    else:
                        pos = p0 + (a / k) * (p1 - p0) + (b / k) * (p2 - p0)
                        vid = new_vertex(pos, TAG_INTERIOR, facet=fi)
                    lattice[(a, b)] = vid
            for a in range(k):
                for b in range(k - a):
                    faces.append((lattice[(a, b)], lattice[(a + 1, b)], lattice[(a, b + 1)]))
                    facet_of_face.append(fi)
                    if a + b <= k - 2:
                        faces.append(
                            (lattice[(a + 1, b)], lattice[(a + 1, b + 1)], lattice[(a, b + 1)])
                        )
                        facet_of_face.append(fi)
        else:
            # Mixed edge counts: triangulate the boundary chain + interior
            # lattice locally. Keeps shared-edge sequences intact.
            local = [i0, i1, i2]
            for (u, v), n in zip(((i0, i1), (i1, i2), (i2, i0)), counts):
                for s in range(1, n):
                    local.append(edge_vertex(u, v, s, n))
            for a in range(1, k):
                for b in range(1, k - a):
                    pos = p0 + (a / k) * (p1 - p0) + (b / k) * (p2 - p0)
                    local.append(new_vertex(pos, TAG_INTERIOR, facet=fi))
            pts2 = np.array([verts[i] for i in local])
            sub = _SciDelaunay(pts2)
            for s in sub.simplices:
                a, b, c = pts2[s[0]], pts2[s[1]], pts2[s[2]]
                signed = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
                if abs(signed) < 1e-14:
                    continue
                tri_ids = (local[s[0]], local[s[1]], local[s[2]])
                if signed < 0:
                    tri_ids = (tri_ids[0], tri_ids[2], tri_ids[1])
                faces.append(tri_ids)
                facet_of_face.append(fi)

    fem = FemMesh(
        vertices=np.array(verts),
        faces=np.array(faces, dtype=np.int64),
        tag_kind=np.array(tag_kind, dtype=np.int8),
        tag_edge=np.array(tag_edge, dtype=np.int32),
        tag_t=np.array(tag_t, dtype=np.float64),
        tag_landmark=np.array(tag_landmark, dtype=np.int32),
        facet_of_face=np.array(facet_of_face, dtype=np.int32),
        vertex_facet=np.array(vertex_facet, dtype=np.int32),
        base=tri,
    )
    # Partition check: sub-face areas must reproduce each facet's area.
    for fi in range(len(tris)):
        sub_area = fem.face_area[fem.facet_of_face == fi].sum()
        if abs(sub_area - facet_areas[fi]) > 1e-9 * max(1.0, facet_areas[fi]):
            raise InvalidInputError(
                f"facet {fi}: subdivision area {sub_area} != facet area {facet_areas[fi]}"
            )
    return fem


# ---------------------------------------------------------------------------
# The semi-parametric map.


@dataclass
class MapModel:
    """Semi-parametric map: geodesic values on Delaunay edges, MLP inside."""

    mlp: MlpParams
    encoding: Encoding
    boundary_table: list          # GeodesicPolyline per Delaunay edge id
    landmark_latents: np.ndarray  # (L, d)

    @property
    def latent_dim(self) -> int:
        return self.landmark_latents.shape[1]


def eval_map_many(model: MapModel, fem: FemMesh, vertex_ids) -> np.ndarray:
    """Latents for a batch of FEM vertices, hard constraints included."""
    ids = np.asarray(vertex_ids, dtype=np.int64)
    out = np.empty((len(ids), model.latent_dim))
    kinds = fem.tag_kind[ids]

    lm = kinds == TAG_LANDMARK
    if lm.any():
        out[lm] = model.landmark_latents[fem.tag_landmark[ids[lm]]]

    bd = kinds == TAG_BOUNDARY
    if bd.any():
        bids = ids[bd]
        vals = np.empty((len(bids), model.latent_dim))
        edges = fem.tag_edge[bids]
        for ei in np.unique(edges):
            sel = edges == ei
            poly = model.boundary_table[ei]
            ts = fem.tag_t[bids[sel]]
            vals[sel] = _eval_polyline_batch(poly, ts)
        out[bd] = vals

    it = kinds == TAG_INTERIOR
    if it.any():
        feats = encode(model.encoding, fem.vertices[ids[it]])
        out[it] = mlp_forward(model.mlp, feats)
    return out


def _eval_polyline_batch(poly: GeodesicPolyline, ts: np.ndarray) -> np.ndarray:
    s = np.interp(ts, poly.warp[:, 0], poly.warp[:, 1])
    n = poly.node_count
    u = s * (n - 1)
    idx = np.minimum(u.astype(int), n - 2)
    frac = (u - idx)[:, None]
    return (1.0 - frac) * poly.nodes[idx] + frac * poly.nodes[idx + 1]


def eval_map(model: MapModel, fem: FemMesh, vertex_id: int) -> np.ndarray:
    """Latent at one FEM vertex (boundary/landmark values are hard)."""
    return eval_map_many(model, fem, [vertex_id])[0]


def face_jacobian(fem: FemMesh, face_id: int, y1, y2, y3) -> np.ndarray:
    """Piecewise-constant Jacobian [y2-y1 | y3-y1] . E^-1 of one face."""
    y = np.stack([np.asarray(y2) - np.asarray(y1), np.asarray(y3) - np.asarray(y1)], axis=1)
    return y @ fem.inv_edge[face_id]


def _face_energies(fem: FemMesh, face_ids: np.ndarray, values: np.ndarray,
                   index_of: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-face ||J||_F^2 * area and the C = M M^T matrices.

    ``values`` holds lifted vectors for unique vertices; ``index_of``
    maps global vertex id to a row of ``values``.
    """
    f = fem.faces[face_ids]
    y1 = values[index_of[f[:, 0]]]
    y2 = values[index_of[f[:, 1]]]
    y3 = values[index_of[f[:, 2]]]
    d1 = y2 - y1
    d2 = y3 - y1
    g00 = (d1 * d1).sum(axis=1)
    g01 = (d1 * d2).sum(axis=1)
    g11 = (d2 * d2).sum(axis=1)
    m = fem.inv_edge[face_ids]
    c = m @ np.swapaxes(m, 1, 2)  # (B, 2, 2)
    frob = c[:, 0, 0] * g00 + 2.0 * c[:, 0, 1] * g01 + c[:, 1, 1] * g11
    return frob * fem.face_area[face_ids], c


def dirichlet_energy_of_values(gen: Generator, fem: FemMesh, latents: np.ndarray,
                               face_ids=None) -> float:
    """Discrete Dirichlet energy of the lift G(latents) over FEM faces."""
    if face_ids is None:
        face_ids = np.arange(len(fem.faces))
    face_ids = np.asarray(face_ids, dtype=np.int64)
    uniq = np.unique(fem.faces[face_ids])
    index_of = np.full(len(fem.vertices), -1, dtype=np.int64)
    index_of[uniq] = np.arange(len(uniq))
    lifted = gen.forward_many(latents[uniq]).reshape(len(uniq), -1)
    energies, _ = _face_energies(fem, face_ids, lifted, index_of)
    return float(energies.sum())


def dirichlet_energy(gen: Generator, model: MapModel, fem: FemMesh, face_ids=None) -> float:
    """Energy of the trained map (hard-constraint evaluation path)."""
    latents = eval_map_many(model, fem, np.arange(len(fem.vertices)))
    return dirichlet_energy_of_values(gen, fem, latents, face_ids)


def barycentric_latents(fem: FemMesh, landmark_latents: np.ndarray) -> np.ndarray:
    """Per-facet barycentric interpolation of landmark latents (the naive lift)."""
    lm = np.asarray(landmark_latents, dtype=np.float64)
    out = np.empty((len(fem.vertices), lm.shape[1]))
    kinds = fem.tag_kind
    out[kinds == TAG_LANDMARK] = lm[fem.tag_landmark[kinds == TAG_LANDMARK]]
    bd = kinds == TAG_BOUNDARY
    if bd.any():
        u = fem.base.edges[fem.tag_edge[bd], 0]
        v = fem.base.edges[fem.tag_edge[bd], 1]
        t = fem.tag_t[bd][:, None]
        out[bd] = (1.0 - t) * lm[u] + t * lm[v]
    it = np.nonzero(kinds == TAG_INTERIOR)[0]
    if len(it):
        tris = fem.base.triangles[fem.vertex_facet[it]]
        corners = fem.base.sites[tris]  # (B, 3, 2)
        e = np.stack([corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0]], axis=2)
        lam = np.einsum("bij,bj->bi", np.linalg.inv(e), fem.vertices[it] - corners[:, 0])
        bary = np.concatenate([(1.0 - lam.sum(axis=1))[:, None], lam], axis=1)
        out[it] = np.einsum("bc,bcd->bd", bary, lm[tris])
    return out


# ---------------------------------------------------------------------------
# Training.


@dataclass(frozen=True)
class TrainMapConfig:
    lr: float = 3e-4
    batch_faces: int = 256
    iters: int = 20000
    seed: int = 0
    width: int = 256
    hidden_layers: int = 4
    encoding_L: int = 5
    include_input: bool = True
    plateau_window: int = 1000
    plateau_rel: float = 1e-3
    # Cosine-decay the learning rate to zero over the run for tight
    # final convergence (flat problems otherwise sit on Adam's noise floor).
    cosine_decay: bool = False
    # Supervised warm start: fit the MLP to the per-facet barycentric
    # latents before minimizing energy. Starting at the naive lift
    # instead of a random surface saves most of the energy descent.
    pretrain_iters: int = 1000
    pretrain_lr: float = 1e-3


def _pretrain_to_barycentric(model: MapModel, fem: FemMesh,
                             landmark_latents: np.ndarray,
                             config: "TrainMapConfig") -> None:
    """Regress the MLP onto the barycentric lift at interior vertices."""
    it_ids = np.nonzero(fem.tag_kind == TAG_INTERIOR)[0]
    if len(it_ids) == 0:
        return
    targets = barycentric_latents(fem, landmark_latents)[it_ids]
    feats = encode(model.encoding, fem.vertices[it_ids])
    params = model.mlp.flat()
    state = AdamState.like(params)
    for it in range(config.pretrain_iters):
        pred = mlp_forward(model.mlp, feats)
        resid = pred - targets
        grads, _ = mlp_backward(model.mlp, feats, 2.0 * resid / len(it_ids))
        lr = config.pretrain_lr * 0.5 * (1.0 + np.cos(np.pi * it / config.pretrain_iters))
        params = adam_step(params, grads, state, lr)
        for li in range(len(model.mlp.weights)):
            model.mlp.weights[li] = params[2 * li]
            model.mlp.biases[li] = params[2 * li + 1]


def train_map(gen: Generator, fem: FemMesh, boundary_table: list,
              landmark_latents: np.ndarray,
              config: TrainMapConfig = TrainMapConfig()) -> tuple[MapModel, list]:
    """Train the interior MLP to minimize the discretized Dirichlet energy.

    Faces are sampled area-weighted without replacement per epoch;
    boundary and landmark lifts are constants (gradients only flow into
    interior vertices through the generator's vjp). Returns the model
    and the per-batch loss trace. Deterministic per seed.
    """
    landmark_latents = np.asarray(landmark_latents, dtype=np.float64)
    d = landmark_latents.shape[1]
    enc = Encoding(L=config.encoding_L, include_input=config.include_input, input_dim=2)
    dims = [enc.output_dim] + [config.width] * config.hidden_layers + [d]
    mlp = mlp_init(dims, seed=config.seed)
    model = MapModel(mlp, enc, boundary_table, landmark_latents)
    if config.iters == 0:
        return model, []

    if config.pretrain_iters > 0:
        _pretrain_to_barycentric(model, fem, landmark_latents, config)

    n_faces = len(fem.faces)
    probs = fem.face_area / fem.face_area.sum()
    rng = np.random.default_rng(config.seed)

    # Constant (hard) lifts for boundary + landmark vertices, computed once.
    const_mask = fem.tag_kind != TAG_INTERIOR
    const_ids = np.nonzero(const_mask)[0]
    const_latents = eval_map_many(model, fem, const_ids)
    const_lift = gen.forward_many(const_latents).reshape(len(const_ids), -1)
    lift_cache = np.zeros((len(fem.vertices), 3 * gen.point_count))
    lift_cache[const_ids] = const_lift
    feats_all = encode(enc, fem.vertices)

    params = mlp.flat()
    state = AdamState.like(params)
    trace: list[float] = []
    epoch_order = np.empty(0, dtype=np.int64)
    cursor = 0
    for it in range(config.iters):
        take = min(config.batch_faces, n_faces)
        if cursor + take > len(epoch_order):
            epoch_order = rng.choice(n_faces, size=n_faces, replace=False, p=probs)
            cursor = 0
        batch = epoch_order[cursor : cursor + take]
        cursor += take

        uniq = np.unique(fem.faces[batch])
        index_of = np.full(len(fem.vertices), -1, dtype=np.int64)
        index_of[uniq] = np.arange(len(uniq))
        u_int = uniq[fem.tag_kind[uniq] == TAG_INTERIOR]
        feats = feats_all[u_int]
        z_int = mlp_forward(model.mlp, feats) if len(u_int) else np.zeros((0, d))
        values = np.empty((len(uniq), 3 * gen.point_count))
        is_const = fem.tag_kind[uniq] != TAG_INTERIOR
        values[is_const] = lift_cache[uniq[is_const]]
        if len(u_int):
            values[~is_const] = gen.forward_many(z_int).reshape(len(u_int), -1)

        energies, c = _face_energies(fem, batch, values, index_of)
        loss = float(energies.sum())
        trace.append(loss)
        if not np.isfinite(loss):
            raise TrainingDivergedError(
                f"map training diverged at batch {it}", iteration=it, trace=trace
            )

        # dE/dY = 2 * area * Y C per face; scatter into per-vertex cotangents.
        f = fem.faces[batch]
        y1 = values[index_of[f[:, 0]]]
        y2 = values[index_of[f[:, 1]]]
        y3 = values[index_of[f[:, 2]]]
        ycols = np.stack([y2 - y1, y3 - y1], axis=2)  # (B, D, 2)
        wa = (2.0 * fem.face_area[batch])[:, None, None]
        dy = wa * np.einsum("bdj,bjk->bdk", ycols, c)  # (B, D, 2)
        cot = np.zeros_like(values)
        np.add.at(cot, index_of[f[:, 1]], dy[:, :, 0])
        np.add.at(cot, index_of[f[:, 2]], dy[:, :, 1])
        np.add.at(cot, index_of[f[:, 0]], -(dy[:, :, 0] + dy[:, :, 1]))

        if len(u_int):
            cot_int = cot[~is_const].reshape(len(u_int), gen.point_count, 3)
            dz = gen.vjp_many(z_int, cot_int)
            grads, _ = mlp_backward(model.mlp, feats, dz)
        else:
            grads = [np.zeros_like(g) for g in params]
        lr = config.lr
        if config.cosine_decay:
            lr *= 0.5 * (1.0 + np.cos(np.pi * it / config.iters))
        params = adam_step(params, grads, state, lr)
        for li in range(len(model.mlp.weights)):
            model.mlp.weights[li] = params[2 * li]
            model.mlp.biases[li] = params[2 * li + 1]

        if (
            config.plateau_window
            and len(trace) >= 2 * config.plateau_window
            and it % config.plateau_window == 0
        ):
            recent = np.mean(trace[-config.plateau_window :])
            before = np.mean(trace[-2 * config.plateau_window : -config.plateau_window])
            if abs(before - recent) < config.plateau_rel * max(abs(before), 1e-30):
                logger.info("map training plateaued at batch %d", it)
                break
    return model, trace


# ---------------------------------------------------------------------------
# Inference.


def fem_locate(fem: FemMesh, q) -> tuple[int, np.ndarray] | None:
    """FEM face containing ``q`` plus barycentric coordinates, or None."""
    hit = locate(fem.base, q)
    if hit is None:
        return None
    facet = hit[0]
    cand = np.nonzero(fem.facet_of_face == facet)[0]
    q = np.asarray(q, dtype=np.float64)
    p1 = fem.vertices[fem.faces[cand, 0]]
    lam = np.einsum("bij,bj->bi", fem.inv_edge[cand], q[None, :] - p1)
    bary = np.concatenate([(1.0 - lam.sum(axis=1))[:, None], lam], axis=1)
    ok = np.nonzero((bary >= -1e-12).all(axis=1))[0]
    if len(ok) == 0:
        # q sits on the facet border; roundoff can exclude it from every
        # sub-face. Take the least-negative candidate.
        best = int(np.argmax(bary.min(axis=1)))
        if bary[best].min() < -1e-9:
            return None
        return int(cand[best]), bary[best]
    sel = int(ok[np.argmin(cand[ok])])
    return int(cand[sel]), bary[sel]


def infer(gen: Generator, model: MapModel, fem: FemMesh, q,
          blend: str = "primal") -> tuple[np.ndarray, PointCloud]:
    """Latent and cloud at an exploration-space point.

    The face's three vertex latents (hard constraints included) are
    blended barycentrically. ``blend='primal'`` interpolates the three
    lifted clouds, matching the piecewise-linear training assumption;
    ``blend='latent'`` runs the generator on the blended latent. The two
    agree exactly for linear generators.
    """
    if blend not in ("primal", "latent"):
        raise InvalidInputError(f"unknown blend mode {blend!r}")
    hit = fem_locate(fem, q)
    if hit is None:
        raise OutsideDomainError(f"query {np.asarray(q).tolist()} is outside the hull")
    face, bary = hit
    vids = fem.faces[face]
    zs = eval_map_many(model, fem, vids)
    z = bary @ zs
    if blend == "latent":
        return z, gen.forward(z)
    clouds = gen.forward_many(zs)
    cloud = np.einsum("c,cnd->nd", bary, clouds)
    return z, PointCloud(cloud)
