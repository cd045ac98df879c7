"""Dynamic-range normalization of raw correlation pairs.

Each pixel pair is rescaled by ``R_ldr / R`` with ``R = |x_i| + |x_q|`` and
``R_ldr = 16 sqrt(R + 36) - 96``, then divided by a fixed ``scale_const``.
Both channels get the same positive factor, so the phase (and therefore the
reconstructed depth) is untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tofmodel import RawFrame

DEFAULT_SCALE_CONST = 64.0


def compress_range(r):
    """``16 sqrt(R + 36) - 96``; accepts scalars or arrays with R >= 0."""
    r_arr = np.asarray(r, dtype=np.float64)
    if not np.all(np.isfinite(r_arr)) or np.any(r_arr < 0):
        raise ValueError("compress_range requires finite R >= 0")
    # 16 (sqrt(R + 36) - 6), rationalized to avoid cancellation at small R
    out = 16.0 * r_arr / (np.sqrt(r_arr + 36.0) + 6.0)
    return float(out) if np.ndim(r) == 0 else out


def expand_range(r_ldr):
    """Inverse of :func:`compress_range`."""
    s = np.asarray(r_ldr, dtype=np.float64) / 16.0
    # ((s + 6)^2 - 36) without cancellation
    return s * (s + 12.0)


@dataclass
class NormalizedFrame:
    i_plane: np.ndarray
    q_plane: np.ndarray
    scale_const: float
    frequency_hz: float
    clamped: np.ndarray  # per-pixel flag: pair was rescaled onto |i| + |q| = 1

    @property
    def shape(self) -> tuple[int, int]:
        return self.i_plane.shape

    @property
    def clamp_count(self) -> int:
        return int(self.clamped.sum())

    def as_raw(self) -> RawFrame:
        """View the normalized planes as a frame (for depth reconstruction)."""
        return RawFrame(self.i_plane, self.q_plane, self.frequency_hz)


def normalize_pair(frame: RawFrame, scale_const: float = DEFAULT_SCALE_CONST) -> NormalizedFrame:
    if not scale_const > 0:
        raise ValueError("scale_const must be positive")
    xi, xq = frame.i_plane, frame.q_plane
    r = np.abs(xi) + np.abs(xq)
    r_safe = np.where(r == 0, 1.0, r)
    gain = compress_range(r) / r_safe / scale_const
    ni, nq = gain * xi, gain * xq
    # Clamp by shrinking the whole pair onto the L1 unit ball: keeps the phase.
    l1 = np.abs(ni) + np.abs(nq)
    clamped = l1 > 1.0
    shrink = np.where(clamped, 1.0 / np.where(clamped, l1, 1.0), 1.0)
    return NormalizedFrame(ni * shrink, nq * shrink, float(scale_const),
                           frame.frequency_hz, clamped)


def denormalize_pair(frame: NormalizedFrame) -> RawFrame:
    if np.any(frame.clamped):
        raise ValueError(
            f"{frame.clamp_count} clamped pixel(s) cannot be denormalized"
        )
    ni, nq = frame.i_plane, frame.q_plane
    r_ldr = (np.abs(ni) + np.abs(nq)) * frame.scale_const
    r = expand_range(r_ldr)
    nz = r_ldr > 0
    gain = np.where(nz, r * frame.scale_const / np.where(nz, r_ldr, 1.0), 0.0)
    return RawFrame(gain * ni, gain * nq, frame.frequency_hz)
