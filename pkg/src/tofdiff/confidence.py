"""Gradient-based confidence maps for noisy depth.

Confidence is one minus the min-max normalized Sobel gradient magnitude, so
smooth, trustworthy regions score near 1 and edges or noisy patches near 0.
"""

from __future__ import annotations

import numpy as np

from .tofmodel import DepthMap

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T


def sobel_gradients(depth: DepthMap) -> tuple[np.ndarray, np.ndarray]:
    """Horizontal and vertical Sobel responses with replicate-padded borders."""
    d = depth.values
    if d.shape[0] < 3 or d.shape[1] < 3:
        raise ValueError(f"Sobel needs at least a 3x3 image, got {d.shape}")
    h, w = d.shape
    p = np.pad(d, 1, mode="edge")
    # separable form: smooth across, then difference, so flat input gives exact zeros
    smooth_v = p[:-2, :] + 2.0 * p[1:-1, :] + p[2:, :]
    smooth_u = p[:, :-2] + 2.0 * p[:, 1:-1] + p[:, 2:]
    du = smooth_v[:, 2:] - smooth_v[:, :-2]
    dv = smooth_u[2:, :] - smooth_u[:-2, :]
    return du, dv


def gradient_magnitude(depth: DepthMap) -> np.ndarray:
    du, dv = sobel_gradients(depth)
    return np.sqrt(du**2 + dv**2)


def confidence_map(depth: DepthMap) -> np.ndarray:
    """Per-pixel confidence in [0, 1]; invalid pixels get 0.

    Min/max statistics are taken over valid pixels only. A flat gradient field
    (max == min) has no noise evidence and maps to all-ones.
    """
    mag = gradient_magnitude(depth)
    valid = depth.valid_mask
    conf = np.zeros_like(mag)
    if not valid.any():
        return conf
    lo, hi = mag[valid].min(), mag[valid].max()
    if hi > lo:
        conf[valid] = 1.0 - (mag[valid] - lo) / (hi - lo)
    else:
        conf[valid] = 1.0
    return np.clip(conf, 0.0, 1.0)
