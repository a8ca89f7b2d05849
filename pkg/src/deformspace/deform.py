"""Mesh deformation driven by trajectories through the exploration space.

Consecutive generator samples along a trajectory induce a discrete flow
field (the clouds are index-corresponded, so no matching is needed).
A smoothing thin-plate-spline RBF extends the field off the sample
points, and mesh vertices are advected through it with explicit Euler
steps. Edges between landmarks additionally get a switch point: the
trajectory instant where forward- and backward-deformed meshes are
closest, remapped to t = 0.5 so topology switches happen exactly on
Voronoi cell boundaries.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .errors import InvalidInputError, NumericalError
from .generator import Generator
from .geodesic import GeodesicPolyline
from .geomcore import PointCloud, TriMesh, chamfer, sample_surface, voronoi_cell_of
from .submanifold import FemMesh, MapModel, infer

logger = logging.getLogger(__name__)

__all__ = [
    "FlowField",
    "RbfInterpolant",
    "SwitchPlan",
    "rbf_fit",
    "rbf_eval",
    "flow_step",
    "resample_path",
    "deform_along",
    "compute_switch_point",
    "remap_edge",
    "active_mesh",
]

SWITCH_WINDOW = (0.35, 0.65)


@dataclass(frozen=True)
class FlowField:
    """Instantaneous displacement samples: centers at time t, S_{t+e} - S_t."""

    centers: np.ndarray
    displacements: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=np.float64)
        d = np.asarray(self.displacements, dtype=np.float64)
        if c.shape != d.shape or c.ndim != 2 or c.shape[1] != 3:
            raise InvalidInputError(f"flow field shapes mismatch: {c.shape} vs {d.shape}")
        if not (np.isfinite(c).all() and np.isfinite(d).all()):
            raise InvalidInputError("flow field has non-finite entries")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "displacements", d)


@dataclass(frozen=True)
class RbfInterpolant:
    """Thin-plate-spline interpolant with a degree-1 polynomial tail."""

    centers: np.ndarray  # (n, 3)
    weights: np.ndarray  # (n, 3) kernel weights, one column per output dim
    poly: np.ndarray     # (4, 3) coefficients of (1, x, y, z)
    smoothing: float


def _tps_kernel(r: np.ndarray) -> np.ndarray:
    """phi(r) = r^2 ln r, with phi(0) = 0 by continuity."""
    out = np.zeros_like(r)
    nz = r > 0.0
    out[nz] = r[nz] ** 2 * np.log(r[nz])
    return out


def rbf_fit(centers, values, smoothing: float) -> RbfInterpolant:
    """Solve the augmented symmetric system [[A+lI, P], [P^T, 0]].

    ``centers`` must contain four affinely independent points (degree-1
    unisolvency) and no duplicates within 1e-9. The side condition
    P^T w = 0 forces exact reproduction of affine data at any smoothing.
    """
    c = np.asarray(centers, dtype=np.float64)
    if isinstance(centers, PointCloud):
        c = centers.points
    b = np.asarray(values, dtype=np.float64)
    if c.ndim != 2 or c.shape[1] != 3 or b.shape != c.shape:
        raise InvalidInputError(f"bad rbf shapes: centers {c.shape}, values {b.shape}")
    if smoothing < 0:
        raise InvalidInputError("smoothing must be >= 0")
    n = len(c)
    if cKDTree(c).query_pairs(1e-9):
        raise InvalidInputError("duplicate rbf centers within 1e-9")
    p = np.concatenate([np.ones((n, 1)), c], axis=1)  # (n, 4)
    if np.linalg.matrix_rank(p) < 4:
        raise InvalidInputError("centers are not unisolvent for degree-1 polynomials")

    a = _tps_kernel(cdist(c, c))
    sys = np.zeros((n + 4, n + 4))
    sys[:n, :n] = a + smoothing * np.eye(n)
    sys[:n, n:] = p
    sys[n:, :n] = p.T
    rhs = np.concatenate([b, np.zeros((4, 3))], axis=0)

    lu, piv = sla.lu_factor(sys)
    anorm = np.abs(sys).sum(axis=0).max()
    rcond, info = lapack.dgecon(lu, anorm, norm="1")
    if info != 0 or rcond < 1e-12:
        raise NumericalError(
            f"rbf system is ill-conditioned (rcond {rcond:.2e}); "
            "increase the smoothing parameter"
        )
    sol = sla.lu_solve((lu, piv), rhs)
    w, d = sol[:n], sol[n:]

    bnorm = np.linalg.norm(b)
    res_top = np.linalg.norm((a + smoothing * np.eye(n)) @ w + p @ d - b)
    res_side = np.linalg.norm(p.T @ w)
    tol = 1e-8 * bnorm + 1e-30
    if res_top > tol or res_side > tol:
        raise NumericalError(
            f"rbf solve residuals too large ({res_top:.2e}, {res_side:.2e}); "
            "increase the smoothing parameter"
        )
    return RbfInterpolant(c, w, d, float(smoothing))


def rbf_eval(interp: RbfInterpolant, queries) -> np.ndarray:
    """S(x) = sum_i w_i phi(|x - x_i|) + d . (1, x, y, z), per output dim."""
    q = np.asarray(queries, dtype=np.float64)
    single = q.ndim == 1
    if single:
        q = q[None, :]
    k = _tps_kernel(cdist(q, interp.centers))
    out = k @ interp.weights
    out += np.concatenate([np.ones((len(q), 1)), q], axis=1) @ interp.poly
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Advection.


def flow_step(gen: Generator, model: MapModel, fem: FemMesh, x_t, x_next,
              vertices: np.ndarray, smoothing: float) -> np.ndarray:
    """Advect mesh vertices by the RBF-interpolated flow between two path points."""
    _, c0 = infer(gen, model, fem, x_t)
    _, c1 = infer(gen, model, fem, x_next)
    field = FlowField(c0.points, c1.points - c0.points)
    interp = rbf_fit(field.centers, field.displacements, smoothing)
    return np.asarray(vertices, dtype=np.float64) + rbf_eval(interp, vertices)


def resample_path(path: np.ndarray, steps: int) -> np.ndarray:
    """Resample a 2D polyline uniformly by arc length into steps segments."""
    pts = np.asarray(path, dtype=np.float64).reshape(-1, 2)
    if len(pts) < 2:
        raise InvalidInputError("path needs >= 2 points")
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total <= 0.0:
        return np.repeat(pts[:1], steps + 1, axis=0)
    s = np.linspace(0.0, total, steps + 1)
    out = np.empty((steps + 1, 2))
    out[:, 0] = np.interp(s, cum, pts[:, 0])
    out[:, 1] = np.interp(s, cum, pts[:, 1])
    out[0] = pts[0]
    out[-1] = pts[-1]
    return out


def deform_along(gen: Generator, model: MapModel, fem: FemMesh, mesh: TriMesh,
                 path, steps: int = 180, smoothing: float = 15.0) -> list:
    """Deform a mesh along a 2D path; returns all steps+1 frames.

    The path is resampled uniformly by arc length; each step advects the
    previous frame's vertices through the instantaneous flow field. Face
    connectivity never changes.
    """
    samples = resample_path(path, steps)
    frames = [mesh]
    verts = mesh.vertices
    for i in range(steps):
        if np.array_equal(samples[i], samples[i + 1]):
            frames.append(frames[-1])
            continue
        verts = flow_step(gen, model, fem, samples[i], samples[i + 1], verts, smoothing)
        frames.append(mesh.with_vertices(verts))
    return frames


# ---------------------------------------------------------------------------
# Switch points.


@dataclass(frozen=True)
class SwitchPlan:
    """Per-Delaunay-edge optimal switch instants inside the search window."""

    t_star: np.ndarray  # per edge, in [0.35, 0.65]

    def warp_knots(self, edge_id: int) -> np.ndarray:
        t = float(self.t_star[edge_id])
        return np.array([[0.0, 0.0], [0.5, t], [1.0, 1.0]])


def mesh_chamfer(a: TriMesh, b: TriMesh, samples: int, seed) -> float:
    """Chamfer between two meshes: surface samplings, or the vertex
    clouds directly when ``samples`` is 0 (deterministic, noise-free)."""
    if samples <= 0:
        return chamfer(PointCloud(a.vertices), PointCloud(b.vertices))
    return chamfer(sample_surface(a, samples, seed=(seed, 0)),
                   sample_surface(b, samples, seed=(seed, 1)))


def compute_switch_point(gen: Generator, model: MapModel, fem: FemMesh,
                         edge: tuple, meshes: tuple, grid: int = 31,
                         smoothing: float = 15.0, steps: int = 200,
                         chamfer_samples: int = 2048, seed: int = 0) -> float:
    """Trajectory instant along an edge where the two deformed meshes align best.

    Mesh i is deformed forward along the 2D edge and mesh j backward;
    the Chamfer distance between the two deformed meshes is evaluated on
    a grid of instants in [0.35, 0.65] and the argmin returned (ties
    resolve toward 0.5, then to the lower t). ``chamfer_samples=0``
    compares vertex clouds directly instead of surface samplings.
    ``steps`` must make every grid instant an exact frame index.
    """
    i, j = edge
    mesh_i, mesh_j = meshes
    lm = fem.base.sites
    ts = np.linspace(SWITCH_WINDOW[0], SWITCH_WINDOW[1], grid)
    idx_f = ts * steps
    idx_b = (1.0 - ts) * steps
    if not (np.allclose(idx_f, np.rint(idx_f)) and np.allclose(idx_b, np.rint(idx_b))):
        raise InvalidInputError(f"{steps} integration steps do not hit the {grid}-point grid")
    fwd = deform_along(gen, model, fem, mesh_i, [lm[i], lm[j]], steps, smoothing)
    bwd = deform_along(gen, model, fem, mesh_j, [lm[j], lm[i]], steps, smoothing)
    dists = np.empty(grid)
    for k, t in enumerate(ts):
        a = fwd[int(round(t * steps))]
        b = bwd[int(round((1.0 - t) * steps))]
        dists[k] = mesh_chamfer(a, b, chamfer_samples, (seed, k))
    return grid_argmin(ts, dists)


def grid_argmin(ts: np.ndarray, dists: np.ndarray) -> float:
    """Argmin instant; ties resolve toward 0.5, then to the lower t."""
    best = np.nonzero(dists == dists.min())[0]
    order = sorted(best, key=lambda m: (abs(ts[m] - 0.5), ts[m]))
    return float(ts[order[0]])


def remap_edge(poly: GeodesicPolyline, t_star: float) -> GeodesicPolyline:
    """Install the piecewise-linear warp mapping 0.5 to the switch instant."""
    if not 0.0 < t_star < 1.0:
        raise InvalidInputError(f"switch point must be inside (0, 1), got {t_star}")
    if t_star == 0.5:
        return poly.with_warp(np.array([[0.0, 0.0], [1.0, 1.0]]))
    return poly.with_warp(np.array([[0.0, 0.0], [0.5, t_star], [1.0, 1.0]]))


def active_mesh(landmark_positions, q, plan: SwitchPlan | None = None) -> int:
    """Landmark whose mesh is displayed at q: the Voronoi cell owner.

    With remapped boundary conditions the optimal switch points fall
    exactly on the Voronoi cell boundaries, so nearest-landmark lookup
    is the whole rule.
    """
    return voronoi_cell_of(landmark_positions, q)
