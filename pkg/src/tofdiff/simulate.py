"""Synthetic dataset generation: scene -> ideal/noisy correlations -> guidance inputs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .confidence import confidence_map
from .rangecodec import DEFAULT_SCALE_CONST, normalize_pair
from .tofmodel import (
    DEFAULT_FREQUENCY_HZ,
    NoiseParams,
    RawFrame,
    add_edge_noise,
    add_sensor_noise,
    correlations_to_depth,
    depth_to_correlations,
    generate_scene,
    random_scene_spec,
)
from .training import SampleRecord


@dataclass(frozen=True)
class SimConfig:
    width: int = 64
    height: int = 64
    frequency_hz: float = DEFAULT_FREQUENCY_HZ
    amplitude_scale: float = 128.0
    scale_const: float = DEFAULT_SCALE_CONST
    noise: NoiseParams = NoiseParams(read_sigma=1.0, shot_gain=0.05)


def record_seed(base_seed: int, index: int) -> int:
    """Independent per-record stream derived from the dataset seed."""
    return int(np.random.SeedSequence([int(base_seed), int(index)]).generate_state(1, np.uint64)[0] >> 1)


def simulate_record(seed: int, cfg: SimConfig = SimConfig()) -> SampleRecord:
    rng = np.random.default_rng(seed)
    spec = random_scene_spec(cfg.width, cfg.height, rng, amplitude_scale=cfg.amplitude_scale)
    scene_seed, edge_seed, noise_seed = (int(s) for s in rng.integers(0, 2**62, 3))
    gt, amp = generate_scene(spec, scene_seed, cfg.frequency_hz)
    ideal = depth_to_correlations(gt, amp, cfg.frequency_hz)
    # edge-noise augmentation perturbs the measured geometry, not the target
    measured = add_edge_noise(gt, cfg.noise, edge_seed, cfg.frequency_hz)
    noisy = add_sensor_noise(depth_to_correlations(measured, amp, cfg.frequency_hz), cfg.noise, noise_seed)
    noisy_depth = correlations_to_depth(noisy)
    conf = confidence_map(noisy_depth)
    ideal_n = normalize_pair(ideal, cfg.scale_const)
    noisy_n = normalize_pair(noisy, cfg.scale_const)
    return SampleRecord(
        ideal=np.stack([ideal_n.i_plane, ideal_n.q_plane]),
        noisy=np.stack([noisy_n.i_plane, noisy_n.q_plane]),
        ideal_raw=np.stack([ideal.i_plane, ideal.q_plane]),
        noisy_raw=np.stack([noisy.i_plane, noisy.q_plane]),
        confidence=conf,
        gt_depth=gt.values,
        gt_valid=gt.valid_mask,
        noisy_depth=noisy_depth.values,
        noisy_valid=noisy_depth.valid_mask,
        seed=int(seed),
        frequency_hz=cfg.frequency_hz,
    )


def simulate_dataset(n: int, seed: int, cfg: SimConfig = SimConfig(), start: int = 0) -> list[SampleRecord]:
    return [simulate_record(record_seed(seed, start + k), cfg) for k in range(n)]


def raw_stats(records) -> dict:
    """Quick look at the dynamic range of a simulated set."""
    r = np.concatenate([np.abs(rec.noisy_raw).sum(0).ravel() for rec in records])
    return {"R_min": float(r.min()), "R_median": float(np.median(r)), "R_max": float(r.max())}
