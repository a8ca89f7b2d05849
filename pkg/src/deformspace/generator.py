"""Pluggable shape generators: latent vector -> index-corresponded point cloud.

A generator is a deterministic, differentiable map from a flat latent
vector of dimension ``latent_dim`` to an ordered cloud of ``point_count``
3D points. Ordered means index ``i`` refers to the same semantic sample
for every latent, which is what makes flow fields possible downstream
without any point matching.

Three synthetic families ship for desk-scale verification, each exposing
a different regime:

- ``linear``: G(z) = A z + b. Geodesics are straight lines, harmonic maps
  are barycentric; the primary closed-form oracle.
- ``bump-ellipsoid``: fixed unit-sphere template directions whose radii
  are modulated by smooth trigonometric functions of the latent; a
  nonlinear family with a closed-form Jacobian.
- ``frozen-net``: a frozen random two-layer tanh network; the stress test.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .geomcore import PointCloud

__all__ = [
    "Generator",
    "LinearGenerator",
    "BumpEllipsoidGenerator",
    "FrozenNetGenerator",
    "make_generator",
    "save_generator",
    "load_generator",
    "correspondence_distance",
    "sphere_directions",
]

DEFAULT_LATENT_DIM = 8
DEFAULT_POINT_COUNT = 512


def sphere_directions(count: int) -> np.ndarray:
    """Deterministic, well-spread unit directions (Fibonacci spiral)."""
    i = np.arange(count, dtype=np.float64) + 0.5
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    z = 1.0 - 2.0 * i / count
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


class Generator:
    """Base class; subclasses implement `_forward` and `_vjp` on raw arrays."""

    family = "abstract"

    def __init__(self, latent_dim: int, point_count: int, name: str = ""):
        if latent_dim < 1 or point_count < 1:
            raise InvalidInputError("latent_dim and point_count must be >= 1")
        self.latent_dim = int(latent_dim)
        self.point_count = int(point_count)
        self.name = name or self.family

    # -- public API ---------------------------------------------------------

    def forward(self, z) -> PointCloud:
        """Generate the ordered cloud for one latent vector."""
        return PointCloud(self._forward(self._check_z(z)))

    def forward_many(self, zs) -> np.ndarray:
        """Batched forward; returns raw (B, N, 3) array."""
        zs = np.asarray(zs, dtype=np.float64)
        if zs.ndim != 2 or zs.shape[1] != self.latent_dim:
            raise InvalidInputError(
                f"latent batch must be (B, {self.latent_dim}), got {zs.shape}"
            )
        return self._forward_many(zs)

    def vjp(self, z, cotangent) -> np.ndarray:
        """(dG/dz)^T . cotangent for one latent; cotangent is (N, 3)."""
        z = self._check_z(z)
        cot = np.asarray(cotangent, dtype=np.float64)
        if isinstance(cotangent, PointCloud):
            cot = cotangent.points
        if cot.shape != (self.point_count, 3):
            raise InvalidInputError(
                f"cotangent must be ({self.point_count}, 3), got {cot.shape}"
            )
        return self._vjp_many(z[None, :], cot[None, :, :])[0]

    def vjp_many(self, zs, cotangents) -> np.ndarray:
        """Batched vjp; (B, d) from (B, d) latents and (B, N, 3) cotangents."""
        zs = np.asarray(zs, dtype=np.float64)
        cots = np.asarray(cotangents, dtype=np.float64)
        if zs.ndim != 2 or zs.shape[1] != self.latent_dim:
            raise InvalidInputError(f"bad latent batch shape {zs.shape}")
        if cots.shape != (len(zs), self.point_count, 3):
            raise InvalidInputError(f"bad cotangent batch shape {cots.shape}")
        return self._vjp_many(zs, cots)

    def spec_dict(self) -> dict:
        """JSON-serializable family + parameters (weights stored separately)."""
        d = {
            "family": self.family,
            "name": self.name,
            "latent_dim": self.latent_dim,
            "point_count": self.point_count,
        }
        d.update(self._params())
        return d

    # -- family hooks ---------------------------------------------------------

    def _check_z(self, z) -> np.ndarray:
        arr = np.asarray(z, dtype=np.float64).reshape(-1)
        if arr.shape != (self.latent_dim,):
            raise InvalidInputError(
                f"latent must have dimension {self.latent_dim}, got {arr.shape}"
            )
        if not np.isfinite(arr).all():
            raise InvalidInputError("latent has non-finite entries")
        return arr

    def _forward(self, z: np.ndarray) -> np.ndarray:
        return self._forward_many(z[None, :])[0]

    def _forward_many(self, zs: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _vjp_many(self, zs: np.ndarray, cots: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _params(self) -> dict:
        return {}

    def weight_arrays(self) -> list[np.ndarray]:
        """Arrays persisted as little-endian f32 alongside the JSON spec."""
        return []


def _as_f32_exact(arr: np.ndarray) -> np.ndarray:
    """Round-trip through float32 so stored and in-memory weights agree."""
    return arr.astype(np.float32).astype(np.float64)


class LinearGenerator(Generator):
    """G(z) = A z + b, reshaped to (N, 3)."""

    family = "linear"

    def __init__(self, A: np.ndarray, b: np.ndarray, name: str = "linear"):
        A = _as_f32_exact(np.asarray(A, dtype=np.float64))
        b = _as_f32_exact(np.asarray(b, dtype=np.float64))
        if A.ndim != 2 or A.shape[0] % 3 != 0 or b.shape != (A.shape[0],):
            raise InvalidInputError(f"bad linear generator shapes {A.shape}, {b.shape}")
        super().__init__(A.shape[1], A.shape[0] // 3, name)
        self.A = A
        self.b = b

    @classmethod
    def random(cls, latent_dim=DEFAULT_LATENT_DIM, point_count=DEFAULT_POINT_COUNT,
               seed=0, name="linear"):
        rng = np.random.default_rng(seed)
        A = rng.normal(scale=1.0 / np.sqrt(latent_dim), size=(3 * point_count, latent_dim))
        b = rng.normal(scale=0.5, size=3 * point_count)
        return cls(A, b, name)

    @classmethod
    def translation(cls, base_cloud: np.ndarray, latent_dim=DEFAULT_LATENT_DIM,
                    name="linear-translation"):
        """First three latent coordinates rigidly translate the base cloud."""
        base = np.asarray(base_cloud, dtype=np.float64)
        n = len(base)
        A = np.zeros((3 * n, latent_dim))
        for k in range(3):
            A[k::3, k] = 1.0
        return cls(A, base.reshape(-1), name)

    def _forward_many(self, zs):
        flat = zs @ self.A.T + self.b
        return flat.reshape(len(zs), self.point_count, 3)

    def _vjp_many(self, zs, cots):
        return cots.reshape(len(zs), -1) @ self.A

    def _params(self):
        return {"weights": "binary"}

    def weight_arrays(self):
        return [self.A, self.b]


class BumpEllipsoidGenerator(Generator):
    """Axis-scaled sphere template with trigonometric radial bumps.

    The first three latent coordinates scale the x/y/z axes; remaining
    coordinates modulate per-direction radii:

        G(z)_i = diag(z0, z1, z2) . u_i . rho_i(z)
        rho_i(z) = 1 + amp * sum_k sin(c_k z_k) cos(w_k <u_i, a_k>)

    so z = (1, 1, 1, 0, ...) reproduces the unit-sphere template exactly
    and the Jacobian is closed-form.
    """

    family = "bump-ellipsoid"

    def __init__(self, latent_dim=DEFAULT_LATENT_DIM, point_count=DEFAULT_POINT_COUNT,
                 seed=0, amp=0.1, c_range=(0.5, 1.5), w_range=(1.0, 4.0),
                 name="bump-ellipsoid"):
        if latent_dim < 4:
            raise InvalidInputError("bump-ellipsoid needs latent_dim >= 4")
        super().__init__(latent_dim, point_count, name)
        self.seed = int(seed)
        self.amp = float(amp)
        self.c_range = (float(c_range[0]), float(c_range[1]))
        self.w_range = (float(w_range[0]), float(w_range[1]))
        self.dirs = sphere_directions(point_count)
        rng = np.random.default_rng(seed)
        nb = latent_dim - 3
        self._c = _as_f32_exact(rng.uniform(*self.c_range, size=nb))
        self._w = _as_f32_exact(rng.uniform(*self.w_range, size=nb))
        axes = rng.normal(size=(nb, 3))
        self._axes = _as_f32_exact(axes / np.linalg.norm(axes, axis=1, keepdims=True))
        # Per-direction phase terms cos(w_k <u_i, a_k>), fixed constants.
        self._dirphase = np.cos(self._w[None, :] * (self.dirs @ self._axes.T))  # (N, nb)

    def _rho(self, zs):
        zb = zs[:, 3:]  # (B, nb)
        return 1.0 + self.amp * np.einsum(
            "bk,nk->bn", np.sin(self._c[None, :] * zb), self._dirphase
        )

    def _forward_many(self, zs):
        rho = self._rho(zs)  # (B, N)
        scaled = zs[:, None, :3] * self.dirs[None, :, :]  # (B, N, 3)
        return scaled * rho[:, :, None]

    def _vjp_many(self, zs, cots):
        rho = self._rho(zs)
        out = np.empty((len(zs), self.latent_dim))
        # d/dz_{0..2}: G_i = z_m * u_im * rho_i for each axis m.
        out[:, :3] = np.einsum("bni,ni,bn->bi", cots, self.dirs, rho)
        # d/dz_k (k >= 3): dG_i = diag(z0..z2) u_i * amp c_k cos(c_k z_k) dirphase_ik
        zb = zs[:, 3:]
        dsin = self.amp * self._c[None, :] * np.cos(self._c[None, :] * zb)  # (B, nb)
        cot_dot_su = np.einsum("bni,ni,bi->bn", cots, self.dirs, zs[:, :3])
        out[:, 3:] = np.einsum("bn,nk->bk", cot_dot_su, self._dirphase) * dsin
        return out

    def _params(self):
        return {"seed": self.seed, "amp": self.amp,
                "c_range": list(self.c_range), "w_range": list(self.w_range)}

    def surface_points(self, dirs, z) -> np.ndarray:
        """Family surface locus at arbitrary unit directions.

        Used to build landmark meshes whose surfaces coincide with the
        generator's output locus at a given latent.
        """
        z = self._check_z(z)
        dirs = np.asarray(dirs, dtype=np.float64)
        dirphase = np.cos(self._w[None, :] * (dirs @ self._axes.T))
        rho = 1.0 + self.amp * dirphase @ np.sin(self._c * z[3:])
        return z[None, :3] * dirs * rho[:, None]


class FrozenNetGenerator(Generator):
    """Frozen random two-layer tanh network: G(z) = W2 tanh(W1 z + b1) + b2."""

    family = "frozen-net"

    def __init__(self, W1, b1, W2, b2, name="frozen-net"):
        W1 = _as_f32_exact(np.asarray(W1, dtype=np.float64))
        b1 = _as_f32_exact(np.asarray(b1, dtype=np.float64))
        W2 = _as_f32_exact(np.asarray(W2, dtype=np.float64))
        b2 = _as_f32_exact(np.asarray(b2, dtype=np.float64))
        if W1.ndim != 2 or W2.ndim != 2 or W2.shape[1] != W1.shape[0]:
            raise InvalidInputError("frozen-net weight shapes do not chain")
        if W2.shape[0] % 3 != 0 or b1.shape != (W1.shape[0],) or b2.shape != (W2.shape[0],):
            raise InvalidInputError("frozen-net bias shapes do not match")
        super().__init__(W1.shape[1], W2.shape[0] // 3, name)
        self.W1, self.b1, self.W2, self.b2 = W1, b1, W2, b2
        self.hidden = W1.shape[0]

    @classmethod
    def random(cls, latent_dim=DEFAULT_LATENT_DIM, point_count=DEFAULT_POINT_COUNT,
               hidden=64, seed=0, gain=1.0, name="frozen-net"):
        rng = np.random.default_rng(seed)
        W1 = rng.normal(scale=gain / np.sqrt(latent_dim), size=(hidden, latent_dim))
        b1 = rng.normal(scale=0.1, size=hidden)
        W2 = rng.normal(scale=1.0 / np.sqrt(hidden), size=(3 * point_count, hidden))
        b2 = rng.normal(scale=0.5, size=3 * point_count)
        return cls(W1, b1, W2, b2, name)

    def _forward_many(self, zs):
        h = np.tanh(zs @ self.W1.T + self.b1)
        flat = h @ self.W2.T + self.b2
        return flat.reshape(len(zs), self.point_count, 3)

    def _vjp_many(self, zs, cots):
        h_pre = zs @ self.W1.T + self.b1
        th = np.tanh(h_pre)
        g_h = cots.reshape(len(zs), -1) @ self.W2
        return (g_h * (1.0 - th * th)) @ self.W1

    def _params(self):
        return {"hidden": self.hidden, "weights": "binary"}

    def weight_arrays(self):
        return [self.W1, self.b1, self.W2, self.b2]


def correspondence_distance(gen: Generator, z1, z2) -> float:
    """Sum over indices of Euclidean distances between corresponding points."""
    c1 = gen.forward(z1).points
    c2 = gen.forward(z2).points
    return float(np.linalg.norm(c1 - c2, axis=1).sum())


# ---------------------------------------------------------------------------
# Persistence: JSON spec + optional little-endian f32 weight blob.


def make_generator(spec: dict, weights: list[np.ndarray] | None = None) -> Generator:
    """Build a generator from its JSON spec (and weight arrays if any)."""
    family = spec.get("family")
    d, n = spec["latent_dim"], spec["point_count"]
    name = spec.get("name", family)
    if family == "linear":
        if weights is None:
            raise InvalidInputError("linear generator requires weight arrays")
        A, b = weights
        return LinearGenerator(A.reshape(3 * n, d), b.reshape(3 * n), name)
    if family == "bump-ellipsoid":
        return BumpEllipsoidGenerator(
            d, n, seed=spec["seed"], amp=spec["amp"],
            c_range=spec.get("c_range", (0.5, 1.5)),
            w_range=spec.get("w_range", (1.0, 4.0)), name=name,
        )
    if family == "frozen-net":
        if weights is None:
            raise InvalidInputError("frozen-net generator requires weight arrays")
        h = spec["hidden"]
        W1, b1, W2, b2 = weights
        return FrozenNetGenerator(
            W1.reshape(h, d), b1.reshape(h), W2.reshape(3 * n, h), b2.reshape(3 * n), name
        )
    raise InvalidInputError(f"unknown generator family {family!r}")


def generator_from_config(cfg: dict) -> Generator:
    """Construct a generator from pipeline-config parameters.

    Unlike :func:`make_generator` (which restores persisted weights),
    this builds weighted families deterministically from a seed.
    """
    family = cfg["family"]
    d = cfg.get("latent_dim", DEFAULT_LATENT_DIM)
    n = cfg.get("point_count", DEFAULT_POINT_COUNT)
    seed = cfg.get("seed", 0)
    name = cfg.get("name", family)
    if family == "linear":
        return LinearGenerator.random(d, n, seed=seed, name=name)
    if family == "bump-ellipsoid":
        return BumpEllipsoidGenerator(
            d, n, seed=seed, amp=cfg.get("amp", 0.1),
            c_range=cfg.get("c_range", (0.5, 1.5)),
            w_range=cfg.get("w_range", (1.0, 4.0)), name=name,
        )
    if family == "frozen-net":
        return FrozenNetGenerator.random(d, n, hidden=cfg.get("hidden", 64),
                                         seed=seed, gain=cfg.get("gain", 1.0), name=name)
    raise InvalidInputError(f"unknown generator family {family!r}")


def generator_spec_with_shapes(gen: Generator) -> dict:
    """Spec dict including weight array shapes when the family has weights."""
    spec = gen.spec_dict()
    arrays = gen.weight_arrays()
    if arrays:
        spec["weight_shapes"] = [list(a.shape) for a in arrays]
    return spec


def weight_blob(gen: Generator) -> bytes:
    """Concatenated little-endian f32 weight arrays."""
    return b"".join(a.astype("<f4").tobytes() for a in gen.weight_arrays())


def split_weight_blob(spec: dict, raw: np.ndarray) -> list:
    arrays = []
    off = 0
    for shape in spec["weight_shapes"]:
        size = int(np.prod(shape))
        arrays.append(raw[off : off + size].reshape(shape))
        off += size
    if off != raw.size:
        raise InvalidInputError("trailing bytes in generator weight blob")
    return arrays


def save_generator(gen: Generator, json_path, bin_path=None) -> None:
    spec = generator_spec_with_shapes(gen)
    if gen.weight_arrays():
        if bin_path is None:
            raise InvalidInputError("this generator family needs a weight file path")
        Path(bin_path).write_bytes(weight_blob(gen))
    Path(json_path).write_text(json.dumps(spec, sort_keys=True, indent=2) + "\n")


def load_generator(json_path, bin_path=None) -> Generator:
    spec = json.loads(Path(json_path).read_text())
    arrays = None
    if spec.get("weight_shapes"):
        if bin_path is None:
            raise InvalidInputError("generator spec references a weight file")
        raw = np.fromfile(bin_path, dtype="<f4").astype(np.float64)
        arrays = split_weight_blob(spec, raw)
    return make_generator(spec, arrays)
