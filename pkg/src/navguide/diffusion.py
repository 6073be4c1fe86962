"""DDPM schedule, training objective, and unguided / cost-guided sampling.

Paths live in normalized robot-frame coordinates inside the diffusion
process; guidance costs are evaluated in world meters and chained back.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .costmap import CostMap
from .costs import CostConfig, degenerate_mask, total_cost
from .denoiser import (AdamWConfig, AdamWState, DenoiserParams, adamw_step, backward,
                       forward)
from .errors import DegeneratePathError, DivergedSampleError, NonFiniteError
from .geometry import NormSpec, Pose

log = logging.getLogger(__name__)

BETA_MIN = 1e-4
BETA_MAX = 0.999
DEFAULT_SCHEDULE = "linear"
DEFAULT_GUIDANCE_SCALE = 3.0


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step coefficients, indexed by step ``t`` in ``1..T`` (index 0 unused)."""

    T: int
    kind: str
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    posterior_var: np.ndarray
    mean_scale: np.ndarray  # 1/sqrt(alpha_t)
    eps_scale: np.ndarray  # beta_t / sqrt(1 - alpha_bar_t)
    noise_std: np.ndarray  # sqrt(posterior_var_t)
    coef_x0: np.ndarray  # posterior mean weight on the clean estimate
    coef_xt: np.ndarray  # posterior mean weight on the current sample
    beta_start: float = BETA_MIN
    beta_end: float = 0.5


def _cosine_alpha_bar(T: int, s: float = 0.008) -> np.ndarray:
    tau = np.arange(T + 1) / T
    f = np.cos((tau + s) / (1 + s) * math.pi / 2) ** 2
    return f / f[0]


def make_schedule(T: int, kind: str = DEFAULT_SCHEDULE, beta_start: float = BETA_MIN,
                  beta_end: float = 0.5) -> NoiseSchedule:
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if kind == "cosine":
        ab = _cosine_alpha_bar(T)
        beta = np.clip(1.0 - ab[1:] / ab[:-1], BETA_MIN, BETA_MAX)
    elif kind == "linear":
        beta = np.linspace(beta_start, beta_end, T) if T > 1 else np.array([beta_end])
    else:
        raise ValueError(f"unknown schedule kind {kind!r}")
    beta = np.concatenate([[0.0], beta])
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    ab_prev = np.concatenate([[1.0], alpha_bar[:-1]])
    with np.errstate(divide="ignore", invalid="ignore"):
        post = np.where(np.arange(T + 1) > 0, beta * (1 - ab_prev) / (1 - alpha_bar), 0.0)
        mean_scale = 1.0 / np.sqrt(alpha)
        eps_scale = np.where(np.arange(T + 1) > 0, beta / np.sqrt(1 - alpha_bar), 0.0)
        coef_x0 = np.where(np.arange(T + 1) > 0, np.sqrt(ab_prev) * beta / (1 - alpha_bar), 0.0)
        coef_xt = np.where(np.arange(T + 1) > 0, np.sqrt(alpha) * (1 - ab_prev) / (1 - alpha_bar), 0.0)
    post = np.maximum(post, 0.0)
    return NoiseSchedule(T, kind, beta, alpha, alpha_bar, post, mean_scale, eps_scale,
                         np.sqrt(post), coef_x0, coef_xt, beta_start, beta_end)


def q_sample(npath0, t, eps, sched: NoiseSchedule) -> np.ndarray:
    """Forward-noise a clean normalized path to step ``t``."""
    ab = sched.alpha_bar[np.asarray(t)]
    ab = np.reshape(ab, np.shape(ab) + (1,) * (np.ndim(npath0) - np.ndim(ab)))
    return np.sqrt(ab) * np.asarray(npath0, dtype=float) + np.sqrt(1.0 - ab) * np.asarray(eps, dtype=float)


def predict_x0(xt, t, eps_hat, sched: NoiseSchedule) -> np.ndarray:
    ab = sched.alpha_bar[t]
    return (xt - math.sqrt(1.0 - ab) * eps_hat) / math.sqrt(ab)


@dataclass
class Model:
    """A trained denoiser bundled with the schedule and scaling it was trained with."""

    params: DenoiserParams
    sched: NoiseSchedule
    norm: NormSpec = field(default_factory=NormSpec)

    @property
    def n_waypoints(self) -> int:
        return self.params.arch.n_waypoints


# --- training --------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    epochs: int = 30
    seed: int = 0
    lr: float = 1e-3
    lr_min: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4

    def __post_init__(self) -> None:
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive")

    def adamw(self) -> AdamWConfig:
        return AdamWConfig(self.lr, self.beta1, self.beta2, self.eps, self.weight_decay)


def cosine_lr(step: int, total: int, lr: float, lr_min: float) -> float:
    if total <= 1:
        return lr
    frac = min(step / (total - 1), 1.0)
    return lr_min + 0.5 * (lr - lr_min) * (1.0 + math.cos(math.pi * frac))


Predictor = Callable[[DenoiserParams, np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def train_step(params: DenoiserParams, ctx: np.ndarray, npath0: np.ndarray, sched: NoiseSchedule,
               rng: np.random.Generator, opt_state: AdamWState, hyper: AdamWConfig,
               lr: float | None = None, predictor: Predictor | None = None) -> tuple[DenoiserParams, float]:
    """One optimizer step on the noise-prediction MSE for a batch.

    ``predictor`` replaces the network's forward pass (test hook); when given,
    only the loss is computed and no update is made.
    """
    x0 = np.asarray(npath0, dtype=float).reshape(len(npath0), -1)
    ctx = np.asarray(ctx, dtype=float)
    if len(x0) == 0:
        raise ValueError("empty batch")
    t = rng.integers(1, sched.T + 1, size=len(x0))
    eps = rng.standard_normal(x0.shape)
    xt = q_sample(x0, t, eps, sched)
    if predictor is not None:
        pred = predictor(params, xt, t, ctx)
        return params, float(np.mean((pred - eps) ** 2))
    pred = forward(params, xt, t, ctx, sched.T)
    diff = pred - eps
    loss = float(np.mean(diff * diff))
    if not math.isfinite(loss):
        raise NonFiniteError("training loss is not finite")
    grads, _ = backward(params, xt, t, ctx, 2.0 * diff / diff.size, sched.T)
    adamw_step(params, grads, opt_state, hyper, lr)
    return params, loss


def train(params: DenoiserParams, ctx: np.ndarray, npaths: np.ndarray, sched: NoiseSchedule,
          cfg: TrainConfig, on_epoch: Callable[[int, float], None] | None = None,
          steps: int | None = None) -> list[float]:
    """Minibatch training loop with cosine learning-rate decay.

    Returns the mean loss of each pass over the data; ``steps`` caps the
    total number of optimizer steps instead of ``cfg.epochs``.
    """
    rng = np.random.default_rng(cfg.seed)
    hyper = cfg.adamw()
    state = AdamWState()
    n = len(npaths)
    per_epoch = max(1, math.ceil(n / cfg.batch_size))
    total = steps if steps is not None else per_epoch * cfg.epochs
    history: list[float] = []
    step = 0
    epoch = 0
    while step < total:
        order = rng.permutation(n)
        losses = []
        for b in range(per_epoch):
            if step >= total:
                break
            idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            lr = cosine_lr(step, total, cfg.lr, cfg.lr_min)
            _, loss = train_step(params, ctx[idx], npaths[idx], sched, rng, state, hyper, lr)
            losses.append(loss)
            step += 1
        mean = float(np.mean(losses))
        history.append(mean)
        if on_epoch is not None:
            on_epoch(epoch, mean)
        epoch += 1
    return history


# --- sampling --------------------------------------------------------------

@dataclass(frozen=True)
class GuidanceConfig:
    scale: float | tuple[float, ...] = DEFAULT_GUIDANCE_SCALE  # constant, or one value per step t=1..T
    cost: CostConfig = field(default_factory=CostConfig)
    grad_clip: float = 0.2
    grad_at_x0: bool = False

    def __post_init__(self) -> None:
        if not self.grad_clip > 0:
            raise ValueError("grad_clip must be positive")
        scales = self.scale if isinstance(self.scale, tuple) else (self.scale,)
        if any(s < 0 for s in scales):
            raise ValueError("guidance scales must be non-negative")

    def scale_at(self, t: int) -> float:
        if isinstance(self.scale, tuple):
            return float(self.scale[t - 1])
        return float(self.scale)


def candidate_noise(seed: int, indices: Sequence[int], T: int, dim: int,
                    retry: bool = False) -> np.ndarray:
    """Initial sample plus per-step noise for each candidate, ``(len(indices), T+1, dim)``.

    Candidate ``i`` draws from its own stream seeded with ``seed + i`` so
    subsets and parallel splits reproduce the same paths.
    """
    out = np.empty((len(indices), T + 1, dim))
    for row, i in enumerate(indices):
        rng = np.random.default_rng([seed + i, 1] if retry else seed + i)
        out[row] = rng.standard_normal((T + 1, dim))
    return out


GradFn = Callable[[np.ndarray], np.ndarray]


def _reverse(model: Model, ctx, noise: np.ndarray, guide: GradFn | None,
             gcfg: GuidanceConfig | None, clip_denoised: bool) -> np.ndarray:
    sched = model.sched
    x = noise[:, 0]
    for t in range(sched.T, 0, -1):
        eps_hat = forward(model.params, x, t, ctx, sched.T)
        if clip_denoised:
            x0 = np.clip(predict_x0(x, t, eps_hat, sched), -1.0, 1.0)
            mean = sched.coef_x0[t] * x0 + sched.coef_xt[t] * x
        else:
            x0 = None
            mean = sched.mean_scale[t] * (x - sched.eps_scale[t] * eps_hat)
        if guide is not None and gcfg.scale_at(t) != 0.0:
            at = x
            if gcfg.grad_at_x0:
                at = x0 if x0 is not None else predict_x0(x, t, eps_hat, sched)
            mean = mean - gcfg.scale_at(t) * guide(at)
        x = mean + sched.noise_std[t] * noise[:, sched.T - t + 1] if t > 1 else mean
        if not np.all(np.isfinite(x)):
            raise DivergedSampleError(f"non-finite sample at step {t}")
    return x


def _to_paths(x: np.ndarray, model: Model) -> np.ndarray:
    p = x.reshape(len(x), model.n_waypoints, 2)
    r = np.linalg.norm(p, axis=-1, keepdims=True)
    p = np.where(r > 1.0, p / np.maximum(r, 1e-300), p)
    return p * model.norm.r_max


def sample_unguided(model: Model, ctx, seed: int, count: int, *, clip_denoised: bool = True) -> np.ndarray:
    """Draw ``count`` robot-frame paths in meters, shape ``(count, N_w, 2)``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    noise = candidate_noise(seed, range(count), model.sched.T, model.params.arch.path_dim)
    return _to_paths(_reverse(model, ctx, noise, None, None, clip_denoised), model)


def guidance_gradient(model: Model, cmap: CostMap | None, goal, gcfg: GuidanceConfig,
                      pose: Pose) -> GradFn:
    """Clipped descent direction on the total cost, w.r.t. normalized robot-frame paths."""
    r_max = model.norm.r_max
    rot = pose.rotation()
    origin = pose.position
    n = model.n_waypoints
    cost_cfg = gcfg.cost

    def grad(x: np.ndarray) -> np.ndarray:
        robot = x.reshape(len(x), n, 2) * r_max
        world = robot @ rot.T + origin
        if cmap is not None:
            g_world = total_cost(world, cmap, goal, cost_cfg).grad
        elif goal is not None:
            g_world = np.zeros_like(world)
            g_world[:, -1] = cost_cfg.alpha * 2.0 * (world[:, -1] - np.asarray(goal, dtype=float))
        else:
            g_world = np.zeros_like(world)
        # world -> robot is a rotation, then d/dnormalized = r_max * d/drobot
        g_norm = (g_world @ rot) * r_max
        disp = np.linalg.norm(g_norm, axis=-1, keepdims=True) * r_max
        factor = gcfg.grad_clip / np.maximum(disp, gcfg.grad_clip)
        return (g_norm * factor).reshape(len(x), -1)

    return grad


def sample_guided(model: Model, ctx, seed: int, count: int, cmap: CostMap | None, goal,
                  gcfg: GuidanceConfig, pose: Pose, *, clip_denoised: bool = True) -> np.ndarray:
    """Cost-guided reverse diffusion.

    Each step subtracts ``s_t * clip(grad F)`` from the posterior mean.  A
    zero scale skips the cost evaluation entirely, so the result is
    bit-identical to :func:`sample_unguided` with the same seed.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    dim = model.params.arch.path_dim
    noise = candidate_noise(seed, range(count), model.sched.T, dim)
    guide = guidance_gradient(model, cmap, goal, gcfg, pose)
    safe = _degeneracy_tolerant(guide, model)
    x = _reverse(model, ctx, noise, safe, gcfg, clip_denoised)
    bad = safe.dropped
    if bad.any():
        idx = np.flatnonzero(bad)
        log.warning("resampling %d degenerate candidate(s)", len(idx))
        retry_noise = candidate_noise(seed, idx, model.sched.T, dim, retry=True)
        retry = _degeneracy_tolerant(guide, model)
        x[idx] = _reverse(model, ctx, retry_noise, retry, gcfg, clip_denoised)
        if retry.dropped.any():
            raise DegeneratePathError("candidate stayed degenerate after resampling")
    return _to_paths(x, model)


class _degeneracy_tolerant:
    """Wrap a guidance gradient so degenerate candidates get zero guidance and are flagged."""

    def __init__(self, guide: GradFn, model: Model):
        self.guide = guide
        self.n = model.n_waypoints
        self.dropped: np.ndarray = np.zeros(0, dtype=bool)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self.dropped.size == 0:
            self.dropped = np.zeros(len(x), dtype=bool)
        bad = degenerate_mask(x.reshape(len(x), self.n, 2))
        self.dropped |= bad
        if not bad.any():
            return self.guide(x)
        out = np.zeros_like(x)
        ok = ~bad
        out[ok] = self.guide(x[ok])
        return out

