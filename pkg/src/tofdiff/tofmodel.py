"""AMCW Time-of-Flight forward/inverse model, sensor noise and synthetic scenes.

Depth is encoded in the phase of a pair of raw correlation images::

    phi = 4 pi f d / c,    x_i = A cos(phi),    x_q = A sin(phi)

and recovered with ``atan2``. Everything here is single-frequency and operates
inside the unambiguous range ``c / (2 f)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np

C_LIGHT = 299_792_458.0
DEFAULT_FREQUENCY_HZ = 20e6
AMPLITUDE_FLOOR = 1e-3
EDGE_THRESHOLD = 0.05  # m per pixel, central differences


def unambiguous_range(frequency_hz: float) -> float:
    return C_LIGHT / (2.0 * frequency_hz)


def _as_image(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be a 2-D image, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")
    return a


@dataclass
class RawFrame:
    """In-phase / quadrature correlation pair at one modulation frequency."""

    i_plane: np.ndarray
    q_plane: np.ndarray
    frequency_hz: float = DEFAULT_FREQUENCY_HZ

    def __post_init__(self):
        self.i_plane = _as_image(self.i_plane, "i_plane")
        self.q_plane = _as_image(self.q_plane, "q_plane")
        if self.i_plane.shape != self.q_plane.shape:
            raise ValueError(
                f"I/Q shape mismatch: {self.i_plane.shape} vs {self.q_plane.shape}"
            )
        if not self.frequency_hz > 0:
            raise ValueError("frequency_hz must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return self.i_plane.shape

    @property
    def height(self) -> int:
        return self.i_plane.shape[0]

    @property
    def width(self) -> int:
        return self.i_plane.shape[1]

    def amplitude(self) -> np.ndarray:
        return np.hypot(self.i_plane, self.q_plane)


@dataclass
class DepthMap:
    """Depth in meters with a validity mask; invalid pixels hold 0."""

    values: np.ndarray
    valid_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = _as_image(self.values, "depth")
        if self.valid_mask is None:
            self.valid_mask = np.ones(self.values.shape, dtype=bool)
        else:
            self.valid_mask = np.asarray(self.valid_mask, dtype=bool)
        if self.valid_mask.shape != self.values.shape:
            raise ValueError("valid_mask shape differs from depth shape")
        self.values = np.where(self.valid_mask, self.values, 0.0)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class NoiseParams:
    read_sigma: float = 0.0
    shot_gain: float = 0.0
    edge_noise_sigma: float = 0.0
    edge_noise_band: int = 0
    dropout_prob: float = 0.0

    def __post_init__(self):
        for name in ("read_sigma", "shot_gain", "edge_noise_sigma"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        if int(self.edge_noise_band) != self.edge_noise_band or self.edge_noise_band < 0:
            raise ValueError("edge_noise_band must be a non-negative integer")
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise ValueError("dropout_prob must lie in [0, 1]")


def depth_to_correlations(
    depth: DepthMap, amplitude: np.ndarray, frequency_hz: float = DEFAULT_FREQUENCY_HZ
) -> RawFrame:
    amplitude = _as_image(amplitude, "amplitude")
    if amplitude.shape != depth.shape:
        raise ValueError(f"depth {depth.shape} and amplitude {amplitude.shape} differ")
    if np.any(amplitude < 0):
        raise ValueError("amplitude must be non-negative")
    if not frequency_hz > 0:
        raise ValueError("frequency_hz must be positive")
    d = depth.values[depth.valid_mask]
    if d.size and (d.min() < 0 or d.max() >= unambiguous_range(frequency_hz)):
        raise ValueError("valid depth outside the unambiguous range")
    phi = 4.0 * np.pi * frequency_hz * depth.values / C_LIGHT
    a = np.where(depth.valid_mask, amplitude, 0.0)
    return RawFrame(a * np.cos(phi), a * np.sin(phi), frequency_hz)


def correlations_to_depth(frame: RawFrame, amplitude_floor: float = AMPLITUDE_FLOOR) -> DepthMap:
    if not frame.frequency_hz > 0:
        raise ValueError("frequency_hz must be positive")
    phi = np.arctan2(frame.q_plane, frame.i_plane)
    phi = np.where(phi < 0, phi + 2.0 * np.pi, phi)
    d = C_LIGHT * phi / (4.0 * np.pi * frame.frequency_hz)
    # phi + 2 pi can round up to exactly 2 pi for tiny negative angles
    d = np.where(d >= unambiguous_range(frame.frequency_hz), 0.0, d)
    valid = frame.amplitude() >= amplitude_floor
    return DepthMap(d, valid)


def add_sensor_noise(
    frame: RawFrame,
    params: NoiseParams,
    seed: int,
    amplitude_floor: float = AMPLITUDE_FLOOR,
) -> RawFrame:
    """Gaussian read + shot noise on each channel, then low-signal dropout.

    Per-pixel variance is ``read_sigma**2 + shot_gain * A``.
    """
    rng = np.random.default_rng(seed)
    amp = frame.amplitude()
    std = np.sqrt(params.read_sigma**2 + params.shot_gain * amp)
    n_i = rng.standard_normal(frame.shape)
    n_q = rng.standard_normal(frame.shape)
    i = frame.i_plane + std * n_i
    q = frame.q_plane + std * n_q
    if params.dropout_prob > 0:
        drop = (amp < 4.0 * amplitude_floor) & (rng.random(frame.shape) < params.dropout_prob)
        i = np.where(drop, 0.0, i)
        q = np.where(drop, 0.0, q)
    return RawFrame(i, q, frame.frequency_hz)


def edge_mask(depth: DepthMap, threshold: float = EDGE_THRESHOLD) -> np.ndarray:
    """Pixels whose central-difference gradient magnitude exceeds ``threshold``."""
    d = depth.values
    gu = np.zeros_like(d)
    gv = np.zeros_like(d)
    gu[:, 1:-1] = (d[:, 2:] - d[:, :-2]) / 2.0
    gv[1:-1, :] = (d[2:, :] - d[:-2, :]) / 2.0
    # gradients touching an invalid pixel are not evidence of an edge
    ok = depth.valid_mask
    ok_u = np.zeros_like(ok)
    ok_v = np.zeros_like(ok)
    ok_u[:, 1:-1] = ok[:, 2:] & ok[:, :-2]
    ok_v[1:-1, :] = ok[2:, :] & ok[:-2, :]
    gu = np.where(ok_u, gu, 0.0)
    gv = np.where(ok_v, gv, 0.0)
    return np.hypot(gu, gv) > threshold


def _dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    if radius == 0:
        return mask.copy()
    h, w = mask.shape
    padded = np.pad(mask, radius)
    out = np.zeros_like(mask)
    for dv in range(2 * radius + 1):
        for du in range(2 * radius + 1):
            out |= padded[dv : dv + h, du : du + w]
    return out


def add_edge_noise(
    depth: DepthMap,
    params: NoiseParams,
    seed: int,
    frequency_hz: float = DEFAULT_FREQUENCY_HZ,
) -> DepthMap:
    """Flying-pixel emulation: Gaussian depth jitter in a band around discontinuities."""
    if params.edge_noise_sigma == 0:
        return DepthMap(depth.values.copy(), depth.valid_mask.copy())
    band = _dilate(edge_mask(depth), int(params.edge_noise_band)) & depth.valid_mask
    rng = np.random.default_rng(seed)
    noise = params.edge_noise_sigma * rng.standard_normal(depth.shape)
    d = np.where(band, depth.values + noise, depth.values)
    d = np.clip(d, 0.0, np.nextafter(unambiguous_range(frequency_hz), 0.0))
    return DepthMap(d, depth.valid_mask.copy())


@dataclass(frozen=True)
class Primitive:
    """A 2.5-D scene element in image coordinates.

    plane:  covers the frame; ``depth`` at the image center, tilted by
            ``slope_u``/``slope_v`` (m per pixel).
    sphere: disc of ``radius`` pixels centred at ``center``; ``depth`` is the
            nearest point and ``depth_extent`` the bulge depth.
    box:    axis-aligned rectangle ``center`` +- ``size/2`` at ``depth``,
            optionally tilted like a plane.
    """

    kind: Literal["plane", "sphere", "box"]
    depth: float
    reflectivity: float = 1.0
    center: tuple[float, float] = (0.0, 0.0)  # (u, v) pixels
    size: tuple[float, float] = (0.0, 0.0)  # box (w, h) pixels
    radius: float = 0.0
    depth_extent: float = 0.0
    slope_u: float = 0.0
    slope_v: float = 0.0

    def __post_init__(self):
        if self.kind not in ("plane", "sphere", "box"):
            raise ValueError(f"unknown primitive kind {self.kind!r}")
        if not 0 < self.reflectivity <= 1:
            raise ValueError("reflectivity must lie in (0, 1]")

    def render(self, height: int, width: int) -> np.ndarray:
        """Depth of this primitive per pixel, +inf where it is absent."""
        v, u = np.mgrid[0:height, 0:width].astype(np.float64)
        if self.kind == "plane":
            cu, cv = (width - 1) / 2.0, (height - 1) / 2.0
            return self.depth + self.slope_u * (u - cu) + self.slope_v * (v - cv)
        cu, cv = self.center
        if self.kind == "sphere":
            rho2 = ((u - cu) ** 2 + (v - cv) ** 2) / max(self.radius, 1e-12) ** 2
            inside = rho2 <= 1.0
            bulge = self.depth_extent * (1.0 - np.sqrt(np.clip(rho2, 0.0, 1.0)))
            return np.where(inside, self.depth + self.depth_extent - bulge, np.inf)
        w, h = self.size
        inside = (np.abs(u - cu) <= w / 2.0) & (np.abs(v - cv) <= h / 2.0)
        d = self.depth + self.slope_u * (u - cu) + self.slope_v * (v - cv)
        return np.where(inside, d, np.inf)


@dataclass(frozen=True)
class SceneSpec:
    width: int
    height: int
    primitives: Sequence[Primitive] = field(default_factory=tuple)
    background_depth: Optional[float] = None
    background_reflectivity: float = 1.0
    amplitude_scale: float = 1.0
    texture_strength: float = 0.0  # seeded multiplicative reflectivity texture

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("scene dimensions must be positive")
        if not self.amplitude_scale > 0:
            raise ValueError("amplitude_scale must be positive")
        if not 0 <= self.texture_strength < 1:
            raise ValueError("texture_strength must lie in [0, 1)")


def generate_scene(
    spec: SceneSpec, seed: int, frequency_hz: float = DEFAULT_FREQUENCY_HZ
) -> tuple[DepthMap, np.ndarray]:
    """Painter's-test depth plus inverse-square amplitude for a scene."""
    if not spec.primitives and spec.background_depth is None:
        raise ValueError("scene has neither primitives nor a background")
    h, w = spec.height, spec.width
    depth = np.full((h, w), np.inf)
    refl = np.zeros((h, w))
    if spec.background_depth is not None:
        depth[:] = spec.background_depth
        refl[:] = spec.background_reflectivity
    for prim in spec.primitives:
        d = prim.render(h, w)
        closer = d < depth
        depth = np.where(closer, d, depth)
        refl = np.where(closer, prim.reflectivity, refl)
    valid = np.isfinite(depth)
    depth = np.where(valid, depth, 0.0)
    d_valid = depth[valid]
    if d_valid.size and (d_valid.min() < 0 or d_valid.max() >= unambiguous_range(frequency_hz)):
        raise ValueError("scene depth leaves the unambiguous range")
    if spec.texture_strength > 0:
        rng = np.random.default_rng(seed)
        refl = refl * (1.0 + spec.texture_strength * rng.uniform(-1.0, 1.0, (h, w)))
    amp = spec.amplitude_scale * refl / np.maximum(depth, 0.1) ** 2
    amp = np.where(valid, amp, 0.0)
    return DepthMap(depth, valid), amp


def random_scene_spec(
    width: int,
    height: int,
    rng: np.random.Generator,
    amplitude_scale: float = 16.0,
    depth_range: tuple[float, float] = (0.6, 4.0),
) -> SceneSpec:
    """Draw a cluttered desk scene: tilted back wall plus 2-4 objects."""
    near, far = depth_range
    bg = rng.uniform(0.75 * far, far)
    prims = [
        Primitive(
            "plane",
            depth=bg - 0.3,
            reflectivity=rng.uniform(0.3, 1.0),
            slope_u=rng.uniform(-0.3, 0.3) / width,
            slope_v=rng.uniform(-0.3, 0.3) / height,
        )
    ]
    for _ in range(rng.integers(2, 5)):
        kind = ("sphere", "box")[rng.integers(0, 2)]
        d = rng.uniform(near, 0.75 * far - 0.4)
        center = (rng.uniform(0, width), rng.uniform(0, height))
        refl = rng.uniform(0.2, 1.0)
        if kind == "sphere":
            r = rng.uniform(0.1, 0.3) * min(width, height)
            prims.append(
                Primitive("sphere", d, refl, center=center, radius=r,
                          depth_extent=rng.uniform(0.05, 0.3))
            )
        else:
            size = (rng.uniform(0.15, 0.5) * width, rng.uniform(0.15, 0.5) * height)
            prims.append(
                Primitive("box", d, refl, center=center, size=size,
                          slope_u=rng.uniform(-0.5, 0.5) / width,
                          slope_v=rng.uniform(-0.5, 0.5) / height)
            )
    return SceneSpec(width, height, tuple(prims), background_depth=bg,
                     background_reflectivity=rng.uniform(0.3, 1.0),
                     amplitude_scale=amplitude_scale)
