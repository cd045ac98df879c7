"""End-to-end denoising of a simulated record: guided DDIM -> channel average -> depth."""

from __future__ import annotations

from dataclasses import replace
from typing import Callable, Optional

import numpy as np
import torch

from .evalkit import MetricsReport, aggregate, compute_metrics
from .guidenet import BaseUNet, GuidanceBranch, check_schedule, forward_base, forward_guided
from .scheduler import SamplerConfig, Schedule, ddim_sample
from .tofmodel import DepthMap, RawFrame, correlations_to_depth
from .training import GuidanceMode, SampleRecord, build_guidance, guidance_planes


def record_guidance(rec: SampleRecord, mode: GuidanceMode = "full", channels: int = 3) -> np.ndarray:
    """``(2, channels + 1, H, W)`` condition stack for the I and Q planes."""
    noisy, conf = guidance_planes(rec, mode)
    return np.stack([build_guidance(noisy[p], conf, channels) for p in range(2)])


def make_eps_model(base: BaseUNet, guide: Optional[GuidanceBranch]) -> Callable:
    def eps_model(x, t, g):
        if guide is None or g is None:
            return forward_base(base, x, t)
        return forward_guided(base, guide, x, t, g)

    return eps_model


def denoise_record(
    base: BaseUNet,
    guide: Optional[GuidanceBranch],
    rec: SampleRecord,
    sched: Schedule,
    sampler: SamplerConfig = SamplerConfig(),
    mode: GuidanceMode = "full",
    eps_model: Optional[Callable] = None,
    guidance_override: Optional[np.ndarray] = None,
) -> tuple[RawFrame, DepthMap]:
    """Sample clean normalized I/Q planes for ``rec`` and reconstruct depth.

    Both planes are sampled as one batch of two 3-channel images; each output
    is averaged back to one channel. Depth comes straight from the normalized
    pair since the normalization never changes the phase.
    """
    c = base.cfg.in_channels
    dtype = next(base.parameters()).dtype
    g_np = record_guidance(rec, mode, c) if guidance_override is None else guidance_override
    g = torch.as_tensor(g_np, dtype=dtype)
    if eps_model is None:
        check_schedule(base, sched)
        eps_model = make_eps_model(base, guide)
    h, w = rec.ideal.shape[1:]
    base.eval()
    x0 = ddim_sample(eps_model, g, sampler, sched, (2, c, h, w), dtype=dtype)
    planes = x0.mean(dim=1).double().numpy()
    frame = RawFrame(planes[0], planes[1], rec.frequency_hz)
    return frame, correlations_to_depth(frame)


def gt_depth(rec: SampleRecord) -> DepthMap:
    return DepthMap(rec.gt_depth, rec.gt_valid)


def noisy_depth(rec: SampleRecord) -> DepthMap:
    return DepthMap(rec.noisy_depth, rec.noisy_valid)


def evaluate_denoiser(base, guide, records, sched, sampler=SamplerConfig(), mode: GuidanceMode = "full") -> MetricsReport:
    reports = []
    for k, rec in enumerate(records):
        cfg = replace(sampler, seed=(sampler.seed + k) % 2**64)
        _, depth = denoise_record(base, guide, rec, sched, cfg, mode)
        reports.append(compute_metrics(depth, gt_depth(rec)))
    return aggregate(reports)


def evaluate_noisy(records) -> MetricsReport:
    return aggregate([compute_metrics(noisy_depth(r), gt_depth(r)) for r in records])
