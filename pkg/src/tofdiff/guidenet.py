"""Frozen-prior U-Net plus a zero-convolution guidance branch.

The base network is a small timestep-conditioned U-Net predicting the noise in
``x_t``. Its last layer is preconditioned: the raw output ``v`` is mapped to
``eps = sqrt(abar_t) * v + sqrt(1 - abar_t) * x_t``, so at high noise the
noise estimate is carried by the skip term and the network's own error reaches
``x0_hat`` unamplified. The objective stays the plain noise MSE. The guidance branch is a trainable copy of the base encoder and
bottleneck fed with ``F_z(E_guidance(g)) + x_t``; its per-level features reach
the frozen decoder through 1x1 zero convolutions, so a freshly attached branch
leaves the base prediction bit-for-bit unchanged.

The latent space is the identity: ``x_t`` is the (3-channel replicated)
normalized correlation image itself.
"""

from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass
from typing import Optional, Union

import torch
import torch.nn as nn
import torch.nn.functional as F

from .scheduler import Schedule, make_schedule

TEXT_PROMPT = ""  # prompt-free: no cross-attention is built


@dataclass(frozen=True)
class ModelConfig:
    in_channels: int = 3
    base_width: int = 32
    depth_levels: int = 3
    guidance_channels: int = 4
    time_embed_dim: int = 64
    guidance_hidden: int = 16

    def __post_init__(self):
        for k, v in asdict(self).items():
            if int(v) != v or v < 1:
                raise ValueError(f"{k} must be a positive integer, got {v}")
        if self.guidance_channels != self.in_channels + 1:
            raise ValueError("guidance_channels must equal in_channels + 1")

    @property
    def widths(self) -> list[int]:
        return [self.base_width * 2**l for l in range(self.depth_levels)]

    @property
    def size_multiple(self) -> int:
        return 2 ** (self.depth_levels - 1)


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Sinusoidal embedding of integer timesteps, shape ``(B, dim)``."""
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / max(half, 1))
    args = t.to(torch.float64)[:, None] * freqs[None]
    emb = torch.cat([torch.cos(args), torch.sin(args)], dim=1)
    if dim % 2:
        emb = F.pad(emb, (0, 1))
    return emb


def _groups(c: int) -> int:
    return math.gcd(8, c)


class ResBlock(nn.Module):
    """Pre-activation residual block with an additive time shift.

    ``GN -> SiLU -> conv3x3 -> + time -> GN -> SiLU -> conv3x3``, plus a
    skip path (1x1 conv when the width changes). The skip keeps an
    un-normalized route from input to output, which the network needs to
    reproduce ``x_t`` at the right scale when ``t`` is large.
    """

    def __init__(self, c_in: int, c_out: int, temb_dim: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(_groups(c_in), c_in)
        self.conv1 = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.temb = nn.Linear(temb_dim, c_out)
        self.norm2 = nn.GroupNorm(_groups(c_out), c_out)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1)
        self.skip = nn.Conv2d(c_in, c_out, 1) if c_in != c_out else nn.Identity()

    def forward(self, x, temb):
        h = self.conv1(F.silu(self.norm1(x))) + self.temb(temb)[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return self.skip(x) + h


class TimeEmbed(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        self.dim = dim
        self.fc1 = nn.Linear(dim, dim)
        self.fc2 = nn.Linear(dim, dim)

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        emb = timestep_embedding(t, self.dim).to(self.fc1.weight.dtype)
        return self.fc2(F.silu(self.fc1(emb)))


class Encoder(nn.Module):
    """Time embedding, down path and bottleneck; the part the guidance branch copies."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        w = cfg.widths
        td = cfg.time_embed_dim
        self.time = TimeEmbed(td)
        self.conv_in = nn.Conv2d(cfg.in_channels, w[0], 3, padding=1)
        self.down = nn.ModuleList()
        c = w[0]
        for l in range(cfg.depth_levels - 1):
            self.down.append(ResBlock(c, w[l], td))
            c = w[l]
        self.mid = ResBlock(c, w[-1], td)

    def forward(self, x, t):
        temb = self.time(t)
        skips = []
        h = self.conv_in(x)
        for blk in self.down:
            h = blk(h, temb)
            skips.append(h)
            h = F.avg_pool2d(h, 2)
        h = self.mid(h, temb)
        return skips, h, temb


class BaseUNet(nn.Module):
    def __init__(self, cfg: ModelConfig, sched: Optional[Schedule] = None):
        super().__init__()
        self.cfg = cfg
        sched = sched or make_schedule()
        # derived from the schedule, so kept out of the state dict
        self.register_buffer("alpha_bar", torch.as_tensor(sched.alpha_bar, dtype=torch.float64), persistent=False)
        w = cfg.widths
        td = cfg.time_embed_dim
        self.encoder = Encoder(cfg)
        self.up = nn.ModuleList()
        for l in reversed(range(cfg.depth_levels - 1)):
            self.up.append(ResBlock(w[l + 1] + w[l], w[l], td))
        self.norm_out = nn.GroupNorm(_groups(w[0]), w[0])
        self.out = nn.Conv2d(w[0], cfg.in_channels, 3, padding=1)

    def decode(self, skips, h, temb):
        for blk, skip in zip(self.up, reversed(skips)):
            h = F.interpolate(h, scale_factor=2, mode="nearest")
            h = blk(torch.cat([h, skip], dim=1), temb)
        return self.out(F.silu(self.norm_out(h)))

    def forward(self, x, t, residuals=None):
        if int(t.min()) < 1 or int(t.max()) > self.alpha_bar.numel():
            raise ValueError(f"timesteps must lie in [1, {self.alpha_bar.numel()}]")
        skips, h, temb = self.encoder(x, t)
        if residuals is not None:
            *res_skips, res_mid = residuals
            skips = [s + r for s, r in zip(skips, res_skips)]
            h = h + res_mid
        v = self.decode(skips, h, temb)
        ab = self.alpha_bar[t - 1].to(x.dtype).view(-1, 1, 1, 1)
        return ab.sqrt() * v + (1 - ab).sqrt() * x


def zero_conv(c_in: int, c_out: int) -> nn.Conv2d:
    conv = nn.Conv2d(c_in, c_out, 1)
    nn.init.zeros_(conv.weight)
    nn.init.zeros_(conv.bias)
    return conv


class GuidanceBranch(nn.Module):
    """E_guidance -> F_z -> trainable encoder copy -> per-level zero convs."""

    def __init__(self, cfg: ModelConfig, encoder: Encoder):
        super().__init__()
        gh = cfg.guidance_hidden
        self.hint = nn.Sequential(
            nn.Conv2d(cfg.guidance_channels, gh, 3, padding=1), nn.SiLU(),
            nn.Conv2d(gh, gh, 3, padding=1), nn.SiLU(),
            nn.Conv2d(gh, gh, 3, padding=1), nn.SiLU(),
            nn.Conv2d(gh, gh, 3, padding=1),
        )
        self.input_zero = zero_conv(gh, cfg.in_channels)
        self.encoder = copy.deepcopy(encoder)
        self.encoder.requires_grad_(True)
        w = cfg.widths
        self.out_zero = nn.ModuleList([zero_conv(c, c) for c in w[:-1]] + [zero_conv(w[-1], w[-1])])

    def forward(self, x, t, g):
        h = self.input_zero(self.hint(g)) + x
        skips, mid, _ = self.encoder(h, t)
        feats = skips + [mid]
        return [z(f) for z, f in zip(self.out_zero, feats)]


def _as_timesteps(t: Union[int, torch.Tensor], batch: int) -> torch.Tensor:
    if isinstance(t, torch.Tensor) and t.dim() == 1:
        return t
    return torch.full((batch,), int(t), dtype=torch.long)


def _check_input(cfg: ModelConfig, x: torch.Tensor):
    if x.dim() != 4 or x.shape[1] != cfg.in_channels:
        raise ValueError(f"expected (B, {cfg.in_channels}, H, W) input, got {tuple(x.shape)}")
    m = cfg.size_multiple
    if x.shape[2] % m or x.shape[3] % m:
        raise ValueError(f"spatial size {tuple(x.shape[2:])} must be a multiple of {m}")


def _init_weights(module: nn.Module, gen: torch.Generator):
    """Fan-in scaled uniform weights, zero biases, unit/zero norm affine."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            fan_in = m.weight[0].numel()
            bound = math.sqrt(3.0 / fan_in)
            with torch.no_grad():
                m.weight.copy_(torch.rand(m.weight.shape, generator=gen, dtype=m.weight.dtype) * 2 * bound - bound)
                m.bias.zero_()
        elif isinstance(m, nn.GroupNorm):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)


def init_base(cfg: ModelConfig, seed: int, dtype=torch.float32, sched: Optional[Schedule] = None) -> BaseUNet:
    gen = torch.Generator().manual_seed(int(seed))
    net = BaseUNet(cfg, sched).to(dtype)
    _init_weights(net, gen)
    return net


def init_guidance(base: BaseUNet, seed: Optional[int] = None) -> GuidanceBranch:
    """Attach a guidance branch whose encoder starts as an exact copy of the base."""
    branch = GuidanceBranch(base.cfg, base.encoder).to(next(base.parameters()).dtype)
    gen = torch.Generator().manual_seed(0 if seed is None else int(seed))
    _init_weights(branch.hint, gen)
    return branch


def check_schedule(base: BaseUNet, sched: Schedule):
    """The output preconditioning bakes in a schedule; refuse to mix two."""
    ab = torch.as_tensor(sched.alpha_bar, dtype=torch.float64)
    if ab.shape != base.alpha_bar.shape or not torch.allclose(base.alpha_bar.double(), ab, rtol=1e-6, atol=0):
        raise ValueError("noise schedule does not match the one the base network was built with")


def forward_base(base: BaseUNet, x_t: torch.Tensor, t) -> torch.Tensor:
    _check_input(base.cfg, x_t)
    return base(x_t, _as_timesteps(t, x_t.shape[0]))


def forward_guided(base: BaseUNet, guide: GuidanceBranch, x_t: torch.Tensor, t, g: torch.Tensor) -> torch.Tensor:
    cfg = base.cfg
    _check_input(cfg, x_t)
    if g.dim() != 4 or g.shape[1] != cfg.guidance_channels or g.shape[2:] != x_t.shape[2:] or g.shape[0] != x_t.shape[0]:
        raise ValueError(
            f"guidance must be (B, {cfg.guidance_channels}, H, W) matching x_t, got {tuple(g.shape)}"
        )
    tt = _as_timesteps(t, x_t.shape[0])
    return base(x_t, tt, residuals=guide(x_t, tt, g))


class GuidedDenoiser(nn.Module):
    """Callable pairing of a frozen base with its guidance branch."""

    def __init__(self, base: BaseUNet, guide: Optional[GuidanceBranch] = None):
        super().__init__()
        self.base = base
        self.guide = guide

    def forward(self, x_t, t, g=None):
        if self.guide is None or g is None:
            return forward_base(self.base, x_t, t)
        return forward_guided(self.base, self.guide, x_t, t, g)


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())

