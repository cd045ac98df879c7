"""Checkpoint container.

Binary layout (all integers little-endian)::

    b"TOFDCKPT"            8-byte magic
    uint32                 format version
    uint64                 header length N
    N bytes                UTF-8 JSON header (sorted keys)
    payload                concatenated raw tensors

The header holds ``meta`` (config echo, schedule constants, seed, loss
history, ...) and ``tensors``: name -> {dtype, shape, offset, nbytes}, with
offsets relative to the payload start. Names are ``base.<param>`` and
``guide.<param>``. Equal inputs give byte-identical files.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import torch

from .pfm import write_atomic

MAGIC = b"TOFDCKPT"
FORMAT_VERSION = 1
_DTYPES = {torch.float32: "<f4", torch.float64: "<f8", torch.int64: "<i8"}
_TORCH = {v: k for k, v in _DTYPES.items()}


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    meta: dict
    tensors: dict[str, torch.Tensor] = field(default_factory=dict)

    def group(self, prefix: str) -> Optional[dict[str, torch.Tensor]]:
        p = prefix + "."
        out = {k[len(p):]: v for k, v in self.tensors.items() if k.startswith(p)}
        return out or None


def to_bytes(ckpt: Checkpoint) -> bytes:
    entries = {}
    blobs = []
    offset = 0
    for name in sorted(ckpt.tensors):
        t = ckpt.tensors[name].detach().cpu().contiguous()
        if t.dtype not in _DTYPES:
            raise CheckpointError(f"unsupported dtype {t.dtype} for {name}")
        raw = t.numpy().astype(_DTYPES[t.dtype], copy=False).tobytes()
        entries[name] = {"dtype": _DTYPES[t.dtype], "shape": list(t.shape), "offset": offset, "nbytes": len(raw)}
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"meta": ckpt.meta, "tensors": entries}, sort_keys=True).encode()
    return MAGIC + struct.pack("<IQ", FORMAT_VERSION, len(header)) + header + b"".join(blobs)


def from_bytes(data: bytes) -> Checkpoint:
    if data[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    try:
        version, n = struct.unpack("<IQ", data[8:20])
    except struct.error:
        raise CheckpointError("truncated checkpoint header") from None
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(data[20 : 20 + n])
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"corrupt header: {exc}") from None
    payload = data[20 + n :]
    tensors = {}
    for name, e in header["tensors"].items():
        end = e["offset"] + e["nbytes"]
        if end > len(payload):
            raise CheckpointError(f"truncated payload for {name}")
        arr = np.frombuffer(payload[e["offset"] : end], dtype=e["dtype"]).reshape(e["shape"])
        tensors[name] = torch.from_numpy(arr.copy())
    return Checkpoint(header["meta"], tensors)


def save(path, ckpt: Checkpoint) -> None:
    write_atomic(path, to_bytes(ckpt))


def load(path) -> Checkpoint:
    with open(path, "rb") as f:
        return from_bytes(f.read())


def _dtype_name(module: torch.nn.Module) -> str:
    return str(next(module.parameters()).dtype).replace("torch.", "")


def pack_models(meta: dict, base, guide=None) -> Checkpoint:
    """Bundle ``base`` (and optionally ``guide``) state dicts with ``meta``."""
    tensors = {f"base.{k}": v for k, v in base.state_dict().items()}
    if guide is not None:
        tensors.update({f"guide.{k}": v for k, v in guide.state_dict().items()})
    return Checkpoint(dict(meta, dtype=_dtype_name(base)), tensors)


def unpack_models(ckpt: Checkpoint):
    """Rebuild ``(base, guide_or_None)`` from a checkpoint written by :func:`pack_models`."""
    from .guidenet import BaseUNet, ModelConfig, init_guidance
    from .scheduler import make_schedule

    try:
        cfg = ModelConfig(**ckpt.meta["model"])
        dtype = getattr(torch, ckpt.meta.get("dtype", "float32"))
        sched = make_schedule(**ckpt.meta.get("schedule", {}))
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise CheckpointError(f"bad model description in checkpoint: {exc}") from None
    base_sd = ckpt.group("base")
    if base_sd is None:
        raise CheckpointError("checkpoint holds no base parameters")
    base = BaseUNet(cfg, sched).to(dtype)
    try:
        base.load_state_dict(base_sd, strict=True)
        guide = None
        guide_sd = ckpt.group("guide")
        if guide_sd is not None:
            guide = init_guidance(base)
            guide.load_state_dict(guide_sd, strict=True)
    except RuntimeError as exc:
        raise CheckpointError(f"checkpoint tensors do not match the model: {exc}") from None
    base.requires_grad_(False)
    return base, guide
