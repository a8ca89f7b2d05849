"""Minimal neural-network engine sized for the exploration-space map.

Sinusoidal positional encoding, a plain MLP with exact reverse-mode
gradients, and SGD/Adam optimizers that operate on lists of arrays so
every optimization loop in the package (latent projection, geodesic
nodes, 2D embedding, map training) shares one implementation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, TrainingDivergedError

__all__ = [
    "Encoding",
    "encode",
    "MlpParams",
    "mlp_init",
    "mlp_forward",
    "mlp_backward",
    "AdamState",
    "adam_step",
    "sgd_step",
]


@dataclass(frozen=True)
class Encoding:
    """Sinusoidal positional encoding with frequencies 2^0..2^L (times pi)."""

    L: int = 5
    include_input: bool = True
    input_dim: int = 2

    @property
    def output_dim(self) -> int:
        dim = self.input_dim * 2 * (self.L + 1)
        if self.include_input:
            dim += self.input_dim
        return dim


def encode(enc: Encoding, x) -> np.ndarray:
    """Encode positions: per frequency k, [sin(2^k pi x), cos(2^k pi x)].

    Accepts a single position or a batch; the raw coordinates are
    prepended when ``include_input`` is set.
    """
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.shape[1] != enc.input_dim:
        raise InvalidInputError(f"expected input dim {enc.input_dim}, got {arr.shape[1]}")
    parts = [arr] if enc.include_input else []
    for k in range(enc.L + 1):
        ang = (2.0**k) * np.pi * arr
        parts.append(np.sin(ang))
        parts.append(np.cos(ang))
    out = np.concatenate(parts, axis=1)
    return out[0] if single else out


@dataclass
class MlpParams:
    """Weights/biases of an MLP; hidden layers use ``activation``, output is linear."""

    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)
    activation: str = "relu"

    @property
    def layer_dims(self) -> list:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def flat(self) -> list:
        """Parameter arrays in optimizer order (W0, b0, W1, b1, ...)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def copy(self) -> "MlpParams":
        return MlpParams(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
        )


def mlp_init(layer_dims, seed=0, activation="relu") -> MlpParams:
    """He-style uniform fan-in initialization, deterministic per seed."""
    rng = np.random.default_rng(seed)
    ws, bs = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        limit = np.sqrt(6.0 / fan_in)
        ws.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        bs.append(np.zeros(fan_out))
    return MlpParams(ws, bs, activation)


def _act(name: str, x: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(x, 0.0)
    if name == "tanh":
        return np.tanh(x)
    raise InvalidInputError(f"unknown activation {name!r}")


def _act_grad(name: str, pre: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (pre > 0.0).astype(np.float64)
    if name == "tanh":
        t = np.tanh(pre)
        return 1.0 - t * t
    raise InvalidInputError(f"unknown activation {name!r}")


def _forward_cached(params: MlpParams, features: np.ndarray):
    """Forward pass keeping pre-activations for the backward pass."""
    h = features
    inputs, pres = [], []
    n = len(params.weights)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        pre = h @ w.T + b
        pres.append(pre)
        h = pre if i == n - 1 else _act(params.activation, pre)
    return h, inputs, pres


def mlp_forward(params: MlpParams, features) -> np.ndarray:
    """Affine + activation composition; final layer linear."""
    arr = np.asarray(features, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.shape[1] != params.weights[0].shape[1]:
        raise InvalidInputError(
            f"features have dim {arr.shape[1]}, expected {params.weights[0].shape[1]}"
        )
    out, _, _ = _forward_cached(params, arr)
    return out[0] if single else out


def mlp_backward(params: MlpParams, features, output_cotangent):
    """Exact reverse-mode gradients of ``mlp_forward``.

    Returns ``(param_grads, input_grad)`` where ``param_grads`` matches
    ``params.flat()`` order. Batched inputs sum gradients over the batch.
    """
    arr = np.asarray(features, dtype=np.float64)
    cot = np.asarray(output_cotangent, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
        cot = cot[None, :]
    if cot.shape != (len(arr), params.weights[-1].shape[0]):
        raise InvalidInputError(f"bad cotangent shape {cot.shape}")
    _, inputs, pres = _forward_cached(params, arr)
    n = len(params.weights)
    grads = [None] * (2 * n)
    g = cot
    for i in range(n - 1, -1, -1):
        if i != n - 1:
            g = g * _act_grad(params.activation, pres[i])
        grads[2 * i] = g.T @ inputs[i]
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ params.weights[i]
    return grads, (g[0] if single else g)


@dataclass
class AdamState:
    """Bias-corrected first/second moment accumulators."""

    m: list
    v: list
    t: int = 0

    @classmethod
    def like(cls, params: list) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def _check_finite(grads, what="gradient"):
    for g in grads:
        if not np.isfinite(g).all():
            raise TrainingDivergedError(f"non-finite {what} encountered")


def adam_step(params: list, grads: list, state: AdamState, lr,
              beta1=0.9, beta2=0.999, eps=1e-8) -> list:
    """One Adam update; mutates ``state``, returns new parameter list."""
    _check_finite(grads)
    state.t += 1
    out = []
    bc1 = 1.0 - beta1**state.t
    bc2 = 1.0 - beta2**state.t
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g
        mh = state.m[i] / bc1
        vh = state.v[i] / bc2
        out.append(p - lr * mh / (np.sqrt(vh) + eps))
    return out


def sgd_step(params: list, grads: list, lr) -> list:
    _check_finite(grads)
    return [p - lr * g for p, g in zip(params, grads)]
