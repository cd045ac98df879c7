"""Flat ``key = value`` run configuration with typed parsing.

Blank lines and ``#`` comments are ignored. Every key must be a field of
:class:`RunConfig`; values are coerced to the field's type (``none`` is
accepted for optional fields). Unknown keys are an error.
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, fields

from .guidenet import ModelConfig
from .scheduler import SamplerConfig, Schedule, make_schedule
from .simulate import SimConfig
from .tofmodel import NoiseParams
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # simulation
    width: int = 64
    height: int = 64
    frequency_hz: float = 20e6
    amplitude_scale: float = 128.0
    scale_const: float = 64.0
    read_sigma: float = 1.0
    shot_gain: float = 0.05
    edge_noise_sigma: float = 0.0
    edge_noise_band: int = 0
    dropout_prob: float = 0.0
    train_records: int = 200
    test_records: int = 16
    # diffusion schedule
    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    # model
    in_channels: int = 3
    base_width: int = 16
    depth_levels: int = 3
    time_embed_dim: int = 64
    guidance_hidden: int = 16
    # training
    iterations: int = 2000
    guidance_iterations: int = 5000
    batch_size: int = 8
    learning_rate: float = 1e-3
    grad_accum_steps: int = 1
    crop_size: typing.Optional[int] = 32
    guidance_mode: str = "full"
    log_window: int = 50
    # sampling
    steps: int = 20
    eta: float = 0.0
    clip_sample: typing.Optional[float] = 1.0

    def noise(self) -> NoiseParams:
        return NoiseParams(self.read_sigma, self.shot_gain, self.edge_noise_sigma,
                           self.edge_noise_band, self.dropout_prob)

    def sim(self) -> SimConfig:
        return SimConfig(self.width, self.height, self.frequency_hz, self.amplitude_scale,
                         self.scale_const, self.noise())

    def model(self) -> ModelConfig:
        return ModelConfig(self.in_channels, self.base_width, self.depth_levels,
                           self.in_channels + 1, self.time_embed_dim, self.guidance_hidden)

    def schedule(self) -> Schedule:
        return make_schedule(self.T, self.beta_start, self.beta_end)

    def train(self, stage: str, seed: int) -> TrainConfig:
        iters = self.iterations if stage == "prior" else self.guidance_iterations
        return TrainConfig(stage, iters, self.batch_size, self.learning_rate, self.grad_accum_steps,
                           seed, crop_size=self.crop_size, guidance_mode=self.guidance_mode,
                           log_window=self.log_window)

    def sampler(self, seed: int, steps: typing.Optional[int] = None) -> SamplerConfig:
        return SamplerConfig(self.steps if steps is None else steps, self.eta, seed, self.clip_sample)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_text(self) -> str:
        return "".join(f"{k} = {'none' if v is None else v}\n" for k, v in self.to_dict().items())


def _coerce(key: str, raw: str, tp):
    optional = typing.get_origin(tp) is typing.Union and type(None) in typing.get_args(tp)
    if optional:
        if raw.lower() == "none":
            return None
        tp = next(a for a in typing.get_args(tp) if a is not type(None))
    try:
        if tp is int:
            return int(raw)
        if tp is float:
            return float(raw)
        if tp is str:
            return raw.strip("\"'")
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {tp.__name__}") from None
    raise ConfigError(f"{key}: unsupported type {tp}")


def parse_config(text: str, base: RunConfig = RunConfig()) -> RunConfig:
    hints = typing.get_type_hints(RunConfig)
    known = {f.name for f in fields(RunConfig)}
    values = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        values[key] = _coerce(key, raw, hints[key])
    cfg = dataclasses.replace(base, **values)
    # build the sub-configs once so their own range checks run at load time
    try:
        cfg.sim(), cfg.model(), cfg.schedule(), cfg.train("prior", 0), cfg.sampler(0)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(path) -> RunConfig:
    with open(path) as f:
        return parse_config(f.read())
