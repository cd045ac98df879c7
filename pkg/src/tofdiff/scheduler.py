"""DDPM forward noising and DDIM sampling.

Timesteps are 1-based: ``t = 1..T`` index the schedule and ``t = 0`` denotes
clean data with ``alpha_bar(0) = 1``. The update rules only use scalar
coefficients, so they accept numpy arrays and torch tensors alike.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import torch


@dataclass(frozen=True)
class Schedule:
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    @property
    def T(self) -> int:
        return len(self.beta)

    def alpha_bar_at(self, t: int) -> float:
        """``alpha_bar_t`` with the convention ``alpha_bar_0 = 1``."""
        if not 0 <= t <= self.T:
            raise ValueError(f"timestep {t} outside [0, {self.T}]")
        return 1.0 if t == 0 else float(self.alpha_bar[t - 1])

    def to_text(self) -> str:
        """Sidecar dump, one ``t beta alpha_bar`` row per step."""
        lines = [f"# T={self.T}"]
        for t in range(1, self.T + 1):
            lines.append(f"{t} {float(self.beta[t - 1])!r} {float(self.alpha_bar[t - 1])!r}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SamplerConfig:
    num_inference_steps: int = 20
    eta: float = 0.0
    seed: int = 0
    clip_sample: Optional[float] = None  # clamp x0 estimates to [-c, c]; None = plain DDIM

    def __post_init__(self):
        if self.num_inference_steps < 1:
            raise ValueError("num_inference_steps must be >= 1")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        if self.clip_sample is not None and not self.clip_sample > 0:
            raise ValueError("clip_sample must be positive")


def make_schedule(T: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02) -> Schedule:
    if T < 1:
        raise ValueError("T must be >= 1")
    if not 0 < beta_start <= beta_end < 1:
        raise ValueError("need 0 < beta_start <= beta_end < 1")
    beta = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    return Schedule(beta, alpha, alpha_bar)


def q_sample(x0, t: int, eps, sched: Schedule):
    """``sqrt(ab_t) x0 + sqrt(1 - ab_t) eps``."""
    if not 1 <= t <= sched.T:
        raise ValueError(f"timestep {t} outside [1, {sched.T}]")
    if tuple(x0.shape) != tuple(eps.shape):
        raise ValueError(f"x0 {tuple(x0.shape)} and eps {tuple(eps.shape)} differ")
    ab = sched.alpha_bar_at(t)
    return math.sqrt(ab) * x0 + math.sqrt(1.0 - ab) * eps


def q_sample_batch(x0: torch.Tensor, t: torch.Tensor, eps: torch.Tensor, sched: Schedule) -> torch.Tensor:
    """Per-sample timesteps for training batches (``t`` has shape ``(B,)``)."""
    ab = torch.as_tensor(sched.alpha_bar, dtype=x0.dtype)[t - 1].view(-1, *([1] * (x0.dim() - 1)))
    return ab.sqrt() * x0 + (1.0 - ab).sqrt() * eps


def ddim_timesteps(T: int, num_steps: int) -> list[int]:
    """Descending stride-``T // num_steps`` subsequence starting at ``T``.

    For T=1000 and 20 steps this is 1000, 950, ..., 50, i.e. schedule array
    indices 999, 949, ..., 49; sampling ends at the clean target t=0.
    """
    if not 1 <= num_steps <= T:
        raise ValueError(f"num_steps must lie in [1, {T}]")
    stride = T // num_steps
    return [T - k * stride for k in range(num_steps)]


def ddim_step(x_t, eps_pred, t: int, t_prev: int, sched: Schedule, eta: float = 0.0,
              noise=None, clip_sample: Optional[float] = None):
    """One DDIM update from ``t`` to ``t_prev`` (``t_prev = 0`` returns the x0 estimate).

    With ``clip_sample`` the x0 estimate is clamped to the data range and the
    noise estimate re-derived from it, so ``x_t`` stays consistent with both.
    """
    if not t_prev < t:
        raise ValueError(f"t_prev ({t_prev}) must be smaller than t ({t})")
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    ab_t = sched.alpha_bar_at(t)
    ab_prev = sched.alpha_bar_at(t_prev)
    x0_hat = (x_t - math.sqrt(1.0 - ab_t) * eps_pred) / math.sqrt(ab_t)
    if clip_sample is not None:
        x0_hat = x0_hat.clamp(-clip_sample, clip_sample)
        eps_pred = (x_t - math.sqrt(ab_t) * x0_hat) / math.sqrt(1.0 - ab_t)
    if t_prev == 0:
        return x0_hat
    sigma = eta * math.sqrt((1.0 - ab_prev) / (1.0 - ab_t)) * math.sqrt(1.0 - ab_t / ab_prev)
    out = math.sqrt(ab_prev) * x0_hat + math.sqrt(max(1.0 - ab_prev - sigma**2, 0.0)) * eps_pred
    if sigma > 0:
        if noise is None:
            raise ValueError("eta > 0 requires a noise draw")
        out = out + sigma * noise
    return out


EpsModel = Callable[[torch.Tensor, int, Optional[torch.Tensor]], torch.Tensor]


@torch.no_grad()
def ddim_sample(
    eps_model: EpsModel,
    guidance: Optional[torch.Tensor],
    cfg: SamplerConfig,
    sched: Schedule,
    shape,
    dtype=torch.float32,
) -> torch.Tensor:
    """Run DDIM from a seeded Gaussian draw down to t=0."""
    gen = torch.Generator().manual_seed(int(cfg.seed))
    x = torch.randn(tuple(shape), generator=gen, dtype=dtype)
    steps = ddim_timesteps(sched.T, cfg.num_inference_steps)
    for k, t in enumerate(steps):
        t_prev = steps[k + 1] if k + 1 < len(steps) else 0
        eps = eps_model(x, t, guidance)
        if tuple(eps.shape) != tuple(x.shape):
            raise ValueError(f"model output {tuple(eps.shape)} != sample shape {tuple(x.shape)}")
        noise = torch.randn(x.shape, generator=gen, dtype=dtype) if cfg.eta > 0 else None
        x = ddim_step(x, eps, t, t_prev, sched, cfg.eta, noise, cfg.clip_sample)
    return x
