"""Two-stage training: base prior on clean correlations, then the guidance branch.

Stage ``prior`` fits the base U-Net to predict the noise added to clean
normalized correlations. Stage ``guidance`` freezes it and fits only the
guidance branch, conditioned on ``concat(noisy correlations, confidence)``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Literal, Optional, Sequence

import numpy as np
import torch

from .guidenet import (
    BaseUNet,
    GuidanceBranch,
    check_schedule,
    ModelConfig,
    forward_base,
    forward_guided,
    init_base,
    init_guidance,
)
from .scheduler import Schedule, make_schedule, q_sample_batch

GuidanceMode = Literal["full", "no_confidence", "hdr"]


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration: int, loss: float):
        super().__init__(f"non-finite loss {loss} at iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class TrainConfig:
    """Desk-scale defaults. :data:`FULL_SCALE_TRAIN_CONFIG` holds the large-model
    schedule (20000 iterations, batch 16, lr 1e-5, 4 accumulation steps)."""

    stage: Literal["prior", "guidance"] = "prior"
    iterations: int = 2000
    batch_size: int = 8
    learning_rate: float = 1e-4
    grad_accum_steps: int = 1
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    crop_size: Optional[int] = 32
    guidance_mode: GuidanceMode = "full"
    log_window: int = 50

    def __post_init__(self):
        if self.stage not in ("prior", "guidance"):
            raise ValueError(f"unknown stage {self.stage!r}")
        if self.iterations < 0 or self.batch_size < 1 or self.grad_accum_steps < 1:
            raise ValueError("iterations >= 0, batch_size >= 1 and grad_accum_steps >= 1 required")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.guidance_mode not in ("full", "no_confidence", "hdr"):
            raise ValueError(f"unknown guidance_mode {self.guidance_mode!r}")


# full-scale schedule for a large pretrained backbone; the desk defaults above are far cheaper
FULL_SCALE_TRAIN_CONFIG = TrainConfig(
    stage="guidance", iterations=20000, batch_size=16, learning_rate=1e-5,
    grad_accum_steps=4, crop_size=None,
)


@dataclass
class SampleRecord:
    """One simulated frame, all planes ``(H, W)`` float64.

    ``ideal``/``noisy`` hold normalized I and Q planes stacked as ``(2, H, W)``;
    ``ideal_raw``/``noisy_raw`` are the un-normalized pairs (the HDR ablation
    conditions on ``noisy_raw``).
    """

    ideal: np.ndarray
    noisy: np.ndarray
    ideal_raw: np.ndarray
    noisy_raw: np.ndarray
    confidence: np.ndarray
    gt_depth: np.ndarray
    gt_valid: np.ndarray
    noisy_depth: np.ndarray
    noisy_valid: np.ndarray
    seed: int
    frequency_hz: float


def guidance_planes(rec: SampleRecord, mode: GuidanceMode = "full") -> tuple[np.ndarray, np.ndarray]:
    """Per-plane condition images: (2, H, W) noisy planes and (H, W) confidence."""
    noisy = rec.noisy_raw if mode == "hdr" else rec.noisy
    conf = np.zeros_like(rec.confidence) if mode == "no_confidence" else rec.confidence
    return noisy, conf


def replicate(plane: np.ndarray, channels: int = 3) -> np.ndarray:
    """1-channel -> ``channels``-channel replication at the model boundary."""
    return np.repeat(plane[None], channels, axis=0)


def build_guidance(noisy_plane: np.ndarray, conf: np.ndarray, channels: int = 3) -> np.ndarray:
    return np.concatenate([replicate(noisy_plane, channels), conf[None]], axis=0)


def loss_eps(eps: torch.Tensor, eps_pred: torch.Tensor) -> torch.Tensor:
    """Mean squared error over all elements."""
    if eps.shape != eps_pred.shape:
        raise ValueError(f"shape mismatch {tuple(eps.shape)} vs {tuple(eps_pred.shape)}")
    return (eps - eps_pred).pow(2).mean()


@dataclass
class AdamState:
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params: Sequence[torch.Tensor], grads: Sequence[torch.Tensor], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    """In-place bias-corrected Adam update of ``params``."""
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    if not state.m:
        state.m = [torch.zeros_like(p) for p in params]
        state.v = [torch.zeros_like(p) for p in params]
    for g in grads:
        if not torch.isfinite(g).all():
            raise ValueError("non-finite gradient")
    state.step += 1
    bc1 = 1.0 - beta1**state.step
    bc2 = 1.0 - beta2**state.step
    with torch.no_grad():
        for p, g, m, v in zip(params, grads, state.m, state.v):
            if p.shape != g.shape:
                raise ValueError(f"param {tuple(p.shape)} vs grad {tuple(g.shape)}")
            m.mul_(beta1).add_(g, alpha=1.0 - beta1)
            v.mul_(beta2).addcmul_(g, g, value=1.0 - beta2)
            p.sub_(lr * (m / bc1) / ((v / bc2).sqrt() + eps))
    return state


def parameter_hash(module: torch.nn.Module) -> str:
    h = hashlib.sha256()
    for name, t in module.state_dict().items():
        h.update(name.encode())
        h.update(t.detach().contiguous().cpu().numpy().tobytes())
    return h.hexdigest()


class BatchSampler:
    """Draws (x0, guidance) training batches from in-memory records."""

    def __init__(self, records: Sequence[SampleRecord], cfg: TrainConfig, in_channels: int = 3,
                 dtype=torch.float32):
        if not records:
            raise ValueError("dataset is empty")
        self.records = records
        self.cfg = cfg
        self.in_channels = in_channels
        self.dtype = dtype
        self.rng = np.random.default_rng(cfg.seed)

    def draw(self, n: int) -> tuple[torch.Tensor, torch.Tensor]:
        xs, gs = [], []
        for _ in range(n):
            rec = self.records[self.rng.integers(len(self.records))]
            plane = int(self.rng.integers(2))
            noisy, conf = guidance_planes(rec, self.cfg.guidance_mode)
            x0 = replicate(rec.ideal[plane], self.in_channels)
            g = build_guidance(noisy[plane], conf, self.in_channels)
            cs = self.cfg.crop_size
            h, w = x0.shape[1:]
            if cs is not None and (cs < h or cs < w):
                v0 = int(self.rng.integers(h - cs + 1))
                u0 = int(self.rng.integers(w - cs + 1))
                x0 = x0[:, v0 : v0 + cs, u0 : u0 + cs]
                g = g[:, v0 : v0 + cs, u0 : u0 + cs]
            xs.append(x0)
            gs.append(g)
        return (torch.as_tensor(np.stack(xs), dtype=self.dtype),
                torch.as_tensor(np.stack(gs), dtype=self.dtype))


def diffusion_loss(base: BaseUNet, guide: Optional[GuidanceBranch], x0: torch.Tensor,
                   g: Optional[torch.Tensor], t: torch.Tensor, eps: torch.Tensor,
                   sched: Schedule) -> torch.Tensor:
    x_t = q_sample_batch(x0, t, eps, sched)
    pred = forward_base(base, x_t, t) if guide is None else forward_guided(base, guide, x_t, t, g)
    return loss_eps(eps, pred)


def backward(base: BaseUNet, guide: Optional[GuidanceBranch], x0, g, t, eps, sched: Schedule,
             scale: float = 1.0) -> float:
    """Accumulate ``scale * dL/dparam`` into ``.grad`` of trainable tensors."""
    loss = diffusion_loss(base, guide, x0, g, t, eps, sched)
    if not torch.isfinite(loss):
        raise ValueError(f"non-finite loss {loss.item()}")
    (loss * scale).backward()
    return float(loss.detach())


@dataclass
class TrainResult:
    base: BaseUNet
    guide: Optional[GuidanceBranch]
    loss_history: list[float]
    cfg: TrainConfig

    def windowed(self) -> list[float]:
        w = self.cfg.log_window
        h = self.loss_history
        return [float(np.mean(h[i : i + w])) for i in range(0, len(h), w)]


def _run(base: BaseUNet, guide: Optional[GuidanceBranch], params: list[torch.Tensor],
         records, cfg: TrainConfig, sched: Schedule) -> list[float]:
    dtype = params[0].dtype
    sampler = BatchSampler(records, cfg, base.cfg.in_channels, dtype)
    gen = torch.Generator().manual_seed(int(cfg.seed) + 1)
    state = AdamState()
    history = []
    for it in range(cfg.iterations):
        for p in params:
            p.grad = None
        total = 0.0
        for _ in range(cfg.grad_accum_steps):
            x0, g = sampler.draw(cfg.batch_size)
            t = torch.randint(1, sched.T + 1, (cfg.batch_size,), generator=gen)
            eps = torch.randn(x0.shape, generator=gen, dtype=dtype)
            loss = diffusion_loss(base, guide, x0, g if guide is not None else None, t, eps, sched)
            if not torch.isfinite(loss):
                raise TrainingDiverged(it, float(loss.detach()))
            (loss / cfg.grad_accum_steps).backward()
            total += float(loss.detach()) / cfg.grad_accum_steps
        grads = [p.grad if p.grad is not None else torch.zeros_like(p) for p in params]
        adam_step(params, grads, state, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
        history.append(total)
    return history


def train_prior(records, cfg: TrainConfig, model_cfg: ModelConfig = ModelConfig(),
                sched: Optional[Schedule] = None, init_seed: Optional[int] = None,
                dtype=torch.float32) -> TrainResult:
    cfg = replace(cfg, stage="prior")
    sched = sched or make_schedule()
    base = init_base(model_cfg, cfg.seed if init_seed is None else init_seed, dtype, sched)
    base.train()
    params = list(base.parameters())
    history = _run(base, None, params, records, cfg, sched) if cfg.iterations else []
    return TrainResult(base, None, history, cfg)


def train_guidance(base: BaseUNet, records, cfg: TrainConfig, sched: Optional[Schedule] = None,
                   guide: Optional[GuidanceBranch] = None) -> TrainResult:
    """Fit a guidance branch on top of ``base``; base parameters are never written."""
    cfg = replace(cfg, stage="guidance")
    sched = sched or make_schedule()
    check_schedule(base, sched)
    before = parameter_hash(base)
    base.requires_grad_(False)
    guide = guide or init_guidance(base, seed=cfg.seed)
    guide.requires_grad_(True)
    params = list(guide.parameters())
    history = _run(base, guide, params, records, cfg, sched) if cfg.iterations else []
    if parameter_hash(base) != before:
        raise RuntimeError("base parameters changed during guidance training")
    return TrainResult(base, guide, history, cfg)
