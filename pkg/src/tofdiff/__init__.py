"""Confidence-guided diffusion denoising of AMCW Time-of-Flight raw correlations."""

__version__ = "0.1.0"

from .confidence import confidence_map
from .evalkit import MetricsReport, aggregate, compute_metrics
from .guidenet import ModelConfig, forward_base, forward_guided, init_base, init_guidance
from .pipeline import denoise_record
from .rangecodec import compress_range, denormalize_pair, expand_range, normalize_pair
from .scheduler import SamplerConfig, ddim_sample, make_schedule
from .simulate import SimConfig, simulate_dataset, simulate_record
from .tofmodel import DepthMap, NoiseParams, RawFrame, correlations_to_depth, depth_to_correlations
from .training import TrainConfig, train_guidance, train_prior

__all__ = [
    "DepthMap", "MetricsReport", "ModelConfig", "NoiseParams", "RawFrame", "SamplerConfig",
    "SimConfig", "TrainConfig", "aggregate", "compress_range", "compute_metrics",
    "confidence_map", "correlations_to_depth", "ddim_sample", "denoise_record",
    "denormalize_pair", "depth_to_correlations", "expand_range", "forward_base",
    "forward_guided", "init_base", "init_guidance", "make_schedule", "normalize_pair",
    "simulate_dataset", "simulate_record", "train_guidance", "train_prior",
]
