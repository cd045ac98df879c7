import json
import struct

import pytest
import torch

from tofdiff.checkpoint import (
    MAGIC,
    Checkpoint,
    CheckpointError,
    from_bytes,
    load,
    pack_models,
    save,
    to_bytes,
    unpack_models,
)
from tofdiff.guidenet import ModelConfig, forward_guided, init_base, init_guidance
from tofdiff.scheduler import make_schedule
from tofdiff.training import parameter_hash

from oracles import perturb_zero_convs

TINY = ModelConfig(base_width=4, depth_levels=2, time_embed_dim=8, guidance_hidden=4)


def test_layout_and_round_trip():
    t = {"b": torch.arange(6, dtype=torch.float64).reshape(2, 3), "a": torch.tensor([1.5], dtype=torch.float32)}
    data = to_bytes(Checkpoint({"seed": 7, "loss": [0.5, 0.25]}, t))
    assert data[:8] == MAGIC
    version, n = struct.unpack("<IQ", data[8:20])
    header = json.loads(data[20 : 20 + n])
    assert version == 1 and header["meta"]["seed"] == 7
    # tensors are laid out in name order
    assert header["tensors"]["a"] == {"dtype": "<f4", "shape": [1], "offset": 0, "nbytes": 4}
    assert header["tensors"]["b"]["offset"] == 4 and len(data) == 20 + n + 4 + 48
    back = from_bytes(data)
    assert back.meta == {"seed": 7, "loss": [0.5, 0.25]}
    assert torch.equal(back.tensors["b"], t["b"]) and back.tensors["a"].dtype == torch.float32


def test_byte_identical_for_equal_inputs():
    a = pack_models({"seed": 1}, init_base(TINY, 3))
    b = pack_models({"seed": 1}, init_base(TINY, 3))
    assert to_bytes(a) == to_bytes(b)


def test_models_round_trip(tmp_path):
    base = init_base(TINY, 0)
    guide = init_guidance(base, seed=1)
    perturb_zero_convs(guide)
    meta = {"model": {"in_channels": 3, "base_width": 4, "depth_levels": 2, "guidance_channels": 4,
                      "time_embed_dim": 8, "guidance_hidden": 4}}
    save(tmp_path / "m.ckpt", pack_models(meta, base, guide))
    b2, g2 = unpack_models(load(tmp_path / "m.ckpt"))
    assert parameter_hash(b2) == parameter_hash(base) and parameter_hash(g2) == parameter_hash(guide)
    x, g = torch.randn(1, 3, 8, 8), torch.randn(1, 4, 8, 8)
    assert torch.equal(forward_guided(base, guide, x, 9, g), forward_guided(b2, g2, x, 9, g))
    _, no_guide = unpack_models(pack_models(meta, base))
    assert no_guide is None


def test_model_mismatch_is_reported():
    ck = pack_models({"model": {"in_channels": 3, "base_width": 8, "depth_levels": 2, "guidance_channels": 4,
                                "time_embed_dim": 8, "guidance_hidden": 4}}, init_base(TINY, 0))
    with pytest.raises(CheckpointError, match="do not match"):
        unpack_models(ck)
    with pytest.raises(CheckpointError, match="model description"):
        unpack_models(Checkpoint({}, ck.tensors))
    with pytest.raises(CheckpointError, match="no base"):
        unpack_models(Checkpoint(ck.meta, {}))


@pytest.mark.parametrize("mutate, msg", [
    (lambda d: b"XXXXXXXX" + d[8:], "magic"),
    (lambda d: d[:12], "truncated"),
    (lambda d: d[:8] + struct.pack("<I", 9) + d[12:], "version"),
    (lambda d: d[:-2], "truncated payload"),
])
def test_corrupt_files(mutate, msg):
    data = to_bytes(Checkpoint({}, {"w": torch.ones(3)}))
    with pytest.raises(CheckpointError, match=msg):
        from_bytes(mutate(data))


def test_unsupported_dtype():
    with pytest.raises(CheckpointError):
        to_bytes(Checkpoint({}, {"w": torch.ones(2, dtype=torch.int8)}))


def test_schedule_travels_with_meta():
    sched = {"T": 50, "beta_start": 1e-3, "beta_end": 0.05}
    base = init_base(TINY, 0, sched=make_schedule(**sched))
    ckpt = from_bytes(to_bytes(pack_models({"model": TINY.__dict__, "schedule": sched}, base)))
    restored, _ = unpack_models(ckpt)
    assert torch.equal(restored.alpha_bar, base.alpha_bar)
    assert "alpha_bar" not in base.state_dict()
