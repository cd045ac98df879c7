"""Depth metrics, error maps and a bilateral-filter baseline."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .tofmodel import DepthMap

DELTA_BASE = 1.25


@dataclass(frozen=True)
class MetricsReport:
    mae_m: float
    absrel: float
    delta1: float
    delta2: float
    delta3: float
    valid_pixel_count: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def joint_mask(pred: DepthMap, gt: DepthMap, use_valid_mask: bool = True) -> np.ndarray:
    if pred.shape != gt.shape:
        raise ValueError(f"pred {pred.shape} and gt {gt.shape} differ")
    m = gt.values > 0
    if use_valid_mask:
        m &= pred.valid_mask & gt.valid_mask
    return m


def compute_metrics(pred: DepthMap, gt: DepthMap, use_valid_mask: bool = True) -> MetricsReport:
    """MAE, AbsRel and delta accuracies over jointly valid pixels with gt > 0."""
    m = joint_mask(pred, gt, use_valid_mask)
    n = int(m.sum())
    if n == 0:
        raise ValueError("no jointly valid pixels")
    p, g = pred.values[m], gt.values[m]
    err = np.abs(p - g)
    with np.errstate(divide="ignore"):
        ratio = np.maximum(p / g, g / p)
    deltas = [float(np.mean(ratio < DELTA_BASE**i)) for i in (1, 2, 3)]
    return MetricsReport(float(err.mean()), float((err / g).mean()), *deltas, n)


def aggregate(reports) -> MetricsReport:
    """Pixel-weighted pooling of per-frame reports."""
    n = sum(r.valid_pixel_count for r in reports)
    if n == 0:
        raise ValueError("no pixels to aggregate")

    def pool(k):
        return float(sum(getattr(r, k) * r.valid_pixel_count for r in reports) / n)

    return MetricsReport(pool("mae_m"), pool("absrel"), pool("delta1"), pool("delta2"), pool("delta3"), n)


def error_map(pred: DepthMap, gt: DepthMap) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel ``|pred - gt|`` and the mask of pixels where it is defined."""
    m = joint_mask(pred, gt)
    return np.where(m, np.abs(pred.values - gt.values), 0.0), m


def bilateral_baseline(depth: DepthMap, spatial_sigma: float = 1.5, range_sigma: float = 0.05,
                       radius: int | None = None) -> DepthMap:
    """Edge-preserving smoothing over valid pixels; the mask is kept as is."""
    if not (spatial_sigma > 0 and range_sigma > 0):
        raise ValueError("sigmas must be positive")
    r = int(np.ceil(2.5 * spatial_sigma)) if radius is None else int(radius)
    d = depth.values
    valid = depth.valid_mask.astype(np.float64)
    h, w = d.shape
    dp = np.pad(d, r, mode="edge")
    vp = np.pad(valid, r)
    num = np.zeros_like(d)
    den = np.zeros_like(d)
    for dv in range(-r, r + 1):
        for du in range(-r, r + 1):
            nb = dp[r + dv : r + dv + h, r + du : r + du + w]
            nv = vp[r + dv : r + dv + h, r + du : r + du + w]
            wgt = nv * np.exp(-(du * du + dv * dv) / (2 * spatial_sigma**2)
                              - (nb - d) ** 2 / (2 * range_sigma**2))
            num += wgt * nb
            den += wgt
    out = np.where(den > 0, num / np.where(den > 0, den, 1.0), d)
    return DepthMap(np.where(depth.valid_mask, out, 0.0), depth.valid_mask.copy())
