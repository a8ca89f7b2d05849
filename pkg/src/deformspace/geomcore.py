"""Foundational geometry: triangle meshes, point clouds, 2D Delaunay/Voronoi.

Conventions used throughout the package:

- Meshes are triangle soups ``(vertices, faces)`` with 0-based indices.
- Point clouds are ordered ``(N, 3)`` arrays; the ordering is semantic
  (index ``i`` corresponds across clouds produced by the same generator).
- Chamfer distance is the symmetric mean of squared nearest-neighbor
  distances, which keeps values comparable across cloud resolutions.
- 2D triangulations are Delaunay (empty circumcircle up to tolerance).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay as _SciDelaunay
from scipy.spatial import QhullError, cKDTree

from .errors import DegenerateInputError, InvalidInputError

__all__ = [
    "TriMesh",
    "PointCloud",
    "Triangulation2D",
    "sample_surface",
    "chamfer",
    "delaunay",
    "locate",
    "voronoi_cell_of",
    "voronoi_cell_polygons",
    "read_obj",
    "write_obj",
    "read_point_cloud",
    "write_point_cloud",
]

# Duplicate 2D sites closer than this are rejected as degenerate.
DUPLICATE_SITE_TOL = 1e-9
# A barycentric coordinate may dip this far below zero and still count
# as inside (guards against roundoff on shared edges).
BARY_TOL = 1e-12


@dataclass(frozen=True)
class TriMesh:
    """Immutable triangle mesh.

    Parameters
    ----------
    vertices : (V, 3) float array
        Vertex positions in model units.
    faces : (F, 3) int array
        Vertex index triples, 0-based.

    Raises
    ------
    InvalidInputError
        If indices are out of range, a face has zero area, or fewer than
        three vertices are given.
    """

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        f = np.ascontiguousarray(np.asarray(self.faces, dtype=np.int64))
        if v.ndim != 2 or v.shape[1] != 3 or v.shape[0] < 3:
            raise InvalidInputError(
                f"mesh needs >= 3 vertices of dimension 3, got shape {v.shape}"
            )
        if f.ndim != 2 or f.shape[1] != 3:
            raise InvalidInputError(f"faces must be (F, 3), got shape {f.shape}")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise InvalidInputError("face index out of range")
        if not np.isfinite(v).all():
            raise InvalidInputError("mesh has non-finite vertex coordinates")
        areas = _face_areas(v, f)
        if f.size and (areas <= 0.0).any():
            bad = np.nonzero(areas <= 0.0)[0]
            raise InvalidInputError(f"degenerate (zero-area) faces: {bad.tolist()}")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def face_areas(self) -> np.ndarray:
        return _face_areas(self.vertices, self.faces)

    @property
    def area(self) -> float:
        return float(self.face_areas.sum())

    def with_vertices(self, vertices: np.ndarray) -> "TriMesh":
        """Same connectivity, new vertex positions."""
        return TriMesh(vertices, self.faces)


def _face_areas(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    a = vertices[faces[:, 0]]
    e1 = vertices[faces[:, 1]] - a
    e2 = vertices[faces[:, 2]] - a
    return 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)


@dataclass(frozen=True)
class PointCloud:
    """Ordered point cloud; index order is semantic (dense correspondence)."""

    points: np.ndarray

    def __post_init__(self):
        p = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        if p.ndim != 2 or p.shape[1] != 3:
            raise InvalidInputError(f"points must be (N, 3), got shape {p.shape}")
        object.__setattr__(self, "points", p)

    def __len__(self) -> int:
        return len(self.points)


def sample_surface(mesh: TriMesh, count: int, seed) -> PointCloud:
    """Sample points uniformly by area on a mesh surface.

    Triangles are chosen with probability proportional to area and the
    point within each triangle is uniform via the square-root-free
    barycentric reflection trick. Deterministic for a fixed ``seed``.
    """
    if count < 1:
        raise InvalidInputError(f"count must be >= 1, got {count}")
    if len(mesh.faces) == 0:
        raise InvalidInputError("cannot sample an empty mesh")
    rng = np.random.default_rng(seed)
    areas = mesh.face_areas
    probs = areas / areas.sum()
    tri_idx = rng.choice(len(mesh.faces), size=count, p=probs)
    u = rng.random(count)
    v = rng.random(count)
    flip = u + v > 1.0
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]
    tri = mesh.faces[tri_idx]
    a = mesh.vertices[tri[:, 0]]
    b = mesh.vertices[tri[:, 1]]
    c = mesh.vertices[tri[:, 2]]
    pts = a + u[:, None] * (b - a) + v[:, None] * (c - a)
    return PointCloud(pts)


def chamfer(a: PointCloud, b: PointCloud) -> float:
    """Symmetric Chamfer distance between two clouds.

    Returns the mean over ``a`` of the squared nearest distance to ``b``
    plus the mean over ``b`` of the squared nearest distance to ``a``.
    The mean (rather than sum) convention keeps values comparable across
    resolutions; any affine-consistent convention preserves argmins.
    """
    pa, pb = a.points, b.points
    if len(pa) == 0 or len(pb) == 0:
        raise InvalidInputError("chamfer requires nonempty clouds")
    d_ab, _ = cKDTree(pb).query(pa)
    d_ba, _ = cKDTree(pa).query(pb)
    return float(np.mean(d_ab**2) + np.mean(d_ba**2))


# ---------------------------------------------------------------------------
# 2D Delaunay triangulation


@dataclass(frozen=True)
class Triangulation2D:
    """Delaunay triangulation of a set of 2D sites.

    Attributes
    ----------
    sites : (S, 2) float array
    triangles : (T, 3) int array
        CCW-oriented, lexicographically sorted triples.
    edges : (E, 2) int array
        Unique sorted index pairs, the union of triangle edges.
    hull : (H,) int array
        Hull site indices in CCW order.
    """

    sites: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    hull: np.ndarray
    # Per-triangle inverse edge matrices for barycentric point location.
    _inv_edges: np.ndarray = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        if self._inv_edges is None:
            object.__setattr__(
                self, "_inv_edges", _tri_inverse_edges(self.sites, self.triangles)
            )

    @property
    def edge_index(self) -> dict:
        """Map from sorted site pair to edge id."""
        return {tuple(e): i for i, e in enumerate(self.edges.tolist())}


def _cross2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """z-component of the cross product of 2D vectors."""
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _tri_inverse_edges(sites: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p1 = sites[triangles[:, 0]]
    e = np.stack(
        [sites[triangles[:, 1]] - p1, sites[triangles[:, 2]] - p1], axis=2
    )  # (T, 2, 2) columns are edge vectors
    return np.linalg.inv(e)


def delaunay(sites) -> Triangulation2D:
    """Delaunay-triangulate 2D sites.

    Backed by Qhull; output is canonicalized (CCW triangles, the triple
    rotated so the smallest index leads, rows sorted) so that the same
    site set yields the same triangle array regardless of insertion
    order. Duplicate sites within 1e-9 and fully collinear inputs are
    rejected.
    """
    pts = np.ascontiguousarray(np.asarray(sites, dtype=np.float64))
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InvalidInputError(f"sites must be (S, 2), got shape {pts.shape}")
    if len(pts) < 3:
        raise InvalidInputError(f"need >= 3 sites, got {len(pts)}")
    if not np.isfinite(pts).all():
        raise InvalidInputError("sites contain non-finite coordinates")
    dup = cKDTree(pts).query_pairs(DUPLICATE_SITE_TOL)
    if dup:
        pairs = sorted(tuple(sorted(p)) for p in dup)
        raise DegenerateInputError(f"duplicate sites within 1e-9: {pairs}")
    try:
        sci = _SciDelaunay(pts)
    except QhullError as exc:
        raise DegenerateInputError(
            f"degenerate site configuration (collinear?): {exc}"
        ) from exc
    if sci.coplanar.size:
        dropped = sorted(int(i) for i in sci.coplanar[:, 0])
        raise DegenerateInputError(f"sites dropped as coplanar by qhull: {dropped}")

    tris = sci.simplices.astype(np.int64)
    # Orient CCW.
    p1, p2, p3 = pts[tris[:, 0]], pts[tris[:, 1]], pts[tris[:, 2]]
    signed = _cross2(p2 - p1, p3 - p1)
    cw = signed < 0
    tris[cw] = tris[cw][:, [0, 2, 1]]
    # Rotate each triple so the smallest index leads (keeps orientation).
    lead = np.argmin(tris, axis=1)
    tris = np.stack(
        [tris[np.arange(len(tris)), (lead + k) % 3] for k in range(3)], axis=1
    )
    tris = tris[np.lexsort((tris[:, 2], tris[:, 1], tris[:, 0]))]

    edges = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    edges = np.unique(np.sort(edges, axis=1), axis=0)

    hull = _order_hull(pts, sci.convex_hull)
    return Triangulation2D(pts, tris, edges, hull)


def _order_hull(pts: np.ndarray, hull_facets: np.ndarray) -> np.ndarray:
    """Order qhull's hull segments into a CCW vertex cycle."""
    nxt = {}
    for a, b in hull_facets:
        # qhull facets are unordered; orient each segment CCW around the
        # centroid of the hull vertices.
        nxt.setdefault(int(a), []).append(int(b))
        nxt.setdefault(int(b), []).append(int(a))
    verts = sorted(nxt)
    start = verts[0]
    order = [start]
    prev = None
    while True:
        cands = [v for v in nxt[order[-1]] if v != prev]
        prev = order[-1]
        order.append(cands[0])
        if order[-1] == start:
            order.pop()
            break
    arr = np.array(order, dtype=np.int64)
    ring = pts[arr]
    area2 = _cross2(ring, np.roll(ring, -1, axis=0)).sum()
    if area2 < 0:
        arr = arr[::-1].copy()
    # Canonical start: smallest site index.
    roll = int(np.argmin(arr))
    return np.roll(arr, -roll)


def locate(tri: Triangulation2D, q) -> tuple[int, np.ndarray] | None:
    """Find the triangle containing ``q`` with its barycentric coordinates.

    Returns ``None`` when ``q`` is outside the triangulation. On shared
    edges the lowest triangle index wins. Barycentric coordinates are
    allowed to dip to -1e-12 to absorb roundoff; they sum to 1 and
    reconstruct ``q`` to 1e-9.
    """
    q = np.asarray(q, dtype=np.float64)
    p1 = tri.sites[tri.triangles[:, 0]]
    lam = np.einsum("tij,tj->ti", tri._inv_edges, q[None, :] - p1)
    bary = np.concatenate([(1.0 - lam.sum(axis=1))[:, None], lam], axis=1)
    inside = (bary >= -BARY_TOL).all(axis=1)
    idx = np.nonzero(inside)[0]
    if len(idx) == 0:
        return None
    t = int(idx[0])
    return t, bary[t]


def voronoi_cell_of(sites, q) -> int:
    """Index of the site nearest to ``q``; ties break to the lowest index."""
    pts = np.asarray(sites, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        raise InvalidInputError("need >= 1 site")
    d2 = ((pts - np.asarray(q, dtype=np.float64)) ** 2).sum(axis=1)
    return int(np.argmin(d2))


def voronoi_cell_polygons(sites, hull_polygon) -> list[np.ndarray]:
    """Voronoi cells of ``sites`` clipped to a convex ``hull_polygon``.

    Each cell is the hull polygon cut by the perpendicular bisector
    half-planes against every other site (Sutherland-Hodgman). Returned
    polygons are CCW ``(K, 2)`` arrays and tile the hull exactly.
    """
    pts = np.asarray(sites, dtype=np.float64).reshape(-1, 2)
    hull = np.asarray(hull_polygon, dtype=np.float64).reshape(-1, 2)
    cells = []
    for i, s in enumerate(pts):
        poly = hull
        for j, t in enumerate(pts):
            if j == i or len(poly) == 0:
                continue
            # Half-plane {x : |x - s| <= |x - t|} = {x : n.x <= c}.
            n = t - s
            c = 0.5 * (t + s) @ n
            poly = _clip_halfplane(poly, n, c)
        cells.append(poly)
    return cells


def _clip_halfplane(poly: np.ndarray, n: np.ndarray, c: float) -> np.ndarray:
    """Clip a convex polygon to {x : n.x <= c}."""
    if len(poly) == 0:
        return poly
    out = []
    d = poly @ n - c
    m = len(poly)
    for k in range(m):
        a, b = poly[k], poly[(k + 1) % m]
        da, db = d[k], d[(k + 1) % m]
        if da <= 0:
            out.append(a)
        if (da < 0 < db) or (db < 0 < da):
            t = da / (da - db)
            out.append(a + t * (b - a))
    if not out:
        return np.zeros((0, 2))
    return np.array(out)


# ---------------------------------------------------------------------------
# File formats


def read_obj(path) -> TriMesh:
    """Read a Wavefront OBJ subset: ``v x y z`` and ``f i j k ...`` lines.

    Polygonal faces are fan-triangulated; ``i/vt/vn`` attributes are
    ignored. Indices may be negative (relative), per the OBJ spec.
    """
    verts: list[list[float]] = []
    faces: list[list[int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tok = line.split()
            if tok[0] == "v":
                if len(tok) < 4:
                    raise InvalidInputError(f"{path}:{lineno}: malformed vertex")
                verts.append([float(tok[1]), float(tok[2]), float(tok[3])])
            elif tok[0] == "f":
                if len(tok) < 4:
                    raise InvalidInputError(f"{path}:{lineno}: face needs >= 3 indices")
                idx = []
                for t in tok[1:]:
                    i = int(t.split("/")[0])
                    idx.append(i - 1 if i > 0 else len(verts) + i)
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
    if not verts:
        raise InvalidInputError(f"{path}: no vertices")
    return TriMesh(np.array(verts), np.array(faces, dtype=np.int64).reshape(-1, 3))


def write_obj(mesh: TriMesh, path) -> None:
    """Write a mesh as ASCII OBJ (v/f lines, full float precision)."""
    with open(path, "w", encoding="utf-8") as fh:
        for v in mesh.vertices:
            fh.write(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


def write_point_cloud(cloud: PointCloud, path) -> None:
    """Persist a cloud as a u64-LE count followed by f32-LE xyz triplets."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(cloud)))
        fh.write(cloud.points.astype("<f4").tobytes())


def read_point_cloud(path) -> PointCloud:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 8:
        raise InvalidInputError(f"{path}: truncated point cloud file")
    (n,) = struct.unpack_from("<Q", raw, 0)
    expected = 8 + 12 * n
    if len(raw) != expected:
        raise InvalidInputError(
            f"{path}: expected {expected} bytes for {n} points, got {len(raw)}"
        )
    pts = np.frombuffer(raw, dtype="<f4", offset=8).reshape(n, 3)
    return PointCloud(pts.astype(np.float64))
