"""Noise-prediction network: a residual MLP with hand-written backprop.

Input is the concatenation ``[noisy path (2*N_w), time embedding, context]``.
Hidden layers use the tanh-form GELU; hidden layers of equal width carry a
residual connection; the output layer is linear.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArchitectureError, NonFiniteError, ShapeMismatchError

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


@dataclass(frozen=True)
class Architecture:
    n_waypoints: int = 8
    ctx_dim: int = 34
    temb_dim: int = 16
    hidden: int = 256
    depth: int = 3

    def validate(self) -> None:
        for name in ("n_waypoints", "ctx_dim", "temb_dim", "hidden", "depth"):
            if getattr(self, name) <= 0:
                raise InvalidArchitectureError(f"{name} must be positive, got {getattr(self, name)}")
        if self.temb_dim % 2:
            raise InvalidArchitectureError("temb_dim must be even")

    @property
    def path_dim(self) -> int:
        return 2 * self.n_waypoints

    @property
    def input_dim(self) -> int:
        return self.path_dim + self.temb_dim + self.ctx_dim

    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [(self.input_dim, self.hidden)]
        dims += [(self.hidden, self.hidden)] * (self.depth - 1)
        dims.append((self.hidden, self.path_dim))
        return dims

    def param_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        shapes = []
        for i, (fan_in, fan_out) in enumerate(self.layer_dims()):
            shapes.append((f"W{i}", (fan_in, fan_out)))
            shapes.append((f"b{i}", (fan_out,)))
        return shapes

    @property
    def param_count(self) -> int:
        return sum(int(np.prod(s)) for _, s in self.param_shapes())


@dataclass
class DenoiserParams:
    arch: Architecture
    tensors: dict[str, np.ndarray]

    def flat(self) -> np.ndarray:
        return np.concatenate([self.tensors[name].ravel() for name, _ in self.arch.param_shapes()])

    @classmethod
    def from_flat(cls, arch: Architecture, flat: np.ndarray) -> "DenoiserParams":
        arch.validate()
        flat = np.asarray(flat, dtype=float)
        if flat.size != arch.param_count:
            raise ShapeMismatchError(f"expected {arch.param_count} parameters, got {flat.size}")
        tensors, pos = {}, 0
        for name, shape in arch.param_shapes():
            n = int(np.prod(shape))
            tensors[name] = flat[pos:pos + n].reshape(shape).copy()
            pos += n
        return cls(arch, tensors)

    def copy(self) -> "DenoiserParams":
        return DenoiserParams(self.arch, {k: v.copy() for k, v in self.tensors.items()})

    def rounded(self) -> "DenoiserParams":
        """Copy with every weight rounded to float32 (what a checkpoint stores)."""
        return DenoiserParams(self.arch, {k: v.astype(np.float32).astype(float)
                                          for k, v in self.tensors.items()})


def init_params(arch: Architecture, seed: int) -> DenoiserParams:
    """Fan-in scaled uniform weights, zero biases."""
    arch.validate()
    rng = np.random.default_rng(seed)
    tensors = {}
    for i, (fan_in, fan_out) in enumerate(arch.layer_dims()):
        bound = math.sqrt(3.0 / fan_in)
        tensors[f"W{i}"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        tensors[f"b{i}"] = np.zeros(fan_out)
    return DenoiserParams(arch, tensors)


def time_embedding(t, n_steps: int, dim: int) -> np.ndarray:
    """Sinusoidal features of ``t / n_steps`` at geometrically spaced frequencies."""
    tau = np.asarray(t, dtype=float).reshape(-1, 1) / n_steps
    freqs = np.exp(np.linspace(0.0, math.log(100.0), dim // 2))
    ang = tau * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=-1)


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + _GELU_A * x ** 3)))


def _gelu_grad(x: np.ndarray) -> np.ndarray:
    th = np.tanh(_GELU_C * (x + _GELU_A * x ** 3))
    return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)


def _assemble(arch: Architecture, npath, t, ctx, n_steps: int) -> tuple[np.ndarray, int]:
    x = np.asarray(npath, dtype=float)
    x = x.reshape(-1, arch.path_dim) if x.size % arch.path_dim == 0 else x
    if x.ndim != 2 or x.shape[1] != arch.path_dim:
        raise ShapeMismatchError(f"path input must flatten to (B, {arch.path_dim}), got {np.shape(npath)}")
    batch = x.shape[0]
    c = np.asarray(ctx, dtype=float)
    if c.ndim == 1:
        c = np.broadcast_to(c, (batch, c.shape[0]))
    if c.shape != (batch, arch.ctx_dim):
        raise ShapeMismatchError(f"context must be ({batch}, {arch.ctx_dim}), got {c.shape}")
    tt = np.broadcast_to(np.asarray(t), (batch,))
    if np.any(tt < 1) or np.any(tt > n_steps):
        raise ValueError(f"diffusion step must lie in [1, {n_steps}]")
    emb = time_embedding(tt, n_steps, arch.temb_dim)
    return np.concatenate([x, emb, c], axis=1), batch


def _forward(params: DenoiserParams, inp: np.ndarray):
    arch = params.arch
    T = params.tensors
    pre, acts = [], [inp]
    h = inp
    for i in range(arch.depth):
        z = h @ T[f"W{i}"] + T[f"b{i}"]
        a = gelu(z)
        h = h + a if i > 0 else a
        pre.append(z)
        acts.append(h)
    out = h @ T[f"W{arch.depth}"] + T[f"b{arch.depth}"]
    return out, pre, acts


def forward(params: DenoiserParams, npath, t, ctx, n_steps: int = 10) -> np.ndarray:
    """Predicted noise, shaped ``(B, 2*N_w)``."""
    inp, _ = _assemble(params.arch, npath, t, ctx, n_steps)
    return _forward(params, inp)[0]


def backward(params: DenoiserParams, npath, t, ctx, output_grad,
             n_steps: int = 10) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Gradients of ``sum(output * output_grad)`` w.r.t. parameters and the path input."""
    arch = params.arch
    inp, batch = _assemble(arch, npath, t, ctx, n_steps)
    _, pre, acts = _forward(params, inp)
    g = np.asarray(output_grad, dtype=float).reshape(batch, arch.path_dim)
    T = params.tensors
    grads: dict[str, np.ndarray] = {}
    L = arch.depth
    grads[f"W{L}"] = acts[L].T @ g
    grads[f"b{L}"] = g.sum(axis=0)
    gh = g @ T[f"W{L}"].T
    for i in range(L - 1, -1, -1):
        gz = gh * _gelu_grad(pre[i])
        grads[f"W{i}"] = acts[i].T @ gz
        grads[f"b{i}"] = gz.sum(axis=0)
        gin = gz @ T[f"W{i}"].T
        gh = gh + gin if i > 0 else gin
    return grads, gh[:, :arch.path_dim]


@dataclass(frozen=True)
class AdamWConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4


@dataclass
class AdamWState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adamw_step(params: DenoiserParams, grads: dict[str, np.ndarray], state: AdamWState,
               hyper: AdamWConfig, lr: float | None = None) -> tuple[DenoiserParams, AdamWState]:
    """One decoupled-weight-decay Adam update, applied in place.

    Raises NonFiniteError without touching anything if a gradient is not finite.
    """
    for name, g in grads.items():
        if g.shape != params.tensors[name].shape:
            raise ShapeMismatchError(f"gradient {name} has shape {g.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient in {name}")
    lr = hyper.lr if lr is None else lr
    state.step += 1
    c1 = 1.0 - hyper.beta1 ** state.step
    c2 = 1.0 - hyper.beta2 ** state.step
    for name, g in grads.items():
        p = params.tensors[name]
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        if hyper.weight_decay:
            p *= 1.0 - lr * hyper.weight_decay
        m *= hyper.beta1
        m += (1.0 - hyper.beta1) * g
        v *= hyper.beta2
        v += (1.0 - hyper.beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + hyper.eps)
    return params, state
