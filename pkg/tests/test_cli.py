import json
import shutil

import numpy as np
import pytest

from tofdiff.cli import main
from tofdiff.pfm import read_pfm

TINY_CFG = """\
width = 16
height = 16
train_records = 3
test_records = 2
base_width = 4
depth_levels = 2
time_embed_dim = 8
guidance_hidden = 4
iterations = 3
guidance_iterations = 3
batch_size = 2
crop_size = 8
steps = 3
"""


def tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    """simulate -> train-prior -> train-guidance once for the whole module."""
    d = tmp_path_factory.mktemp("cli")
    (d / "tiny.cfg").write_text(TINY_CFG)
    cfg = str(d / "tiny.cfg")
    assert main(["simulate", "--config", cfg, "--out", str(d / "ds"), "--seed", "7"]) == 0
    m = str(d / "ds" / "manifest.json")
    assert main(["train-prior", "--config", cfg, "--manifest", m, "--out", str(d / "pr"), "--seed", "1"]) == 0
    assert main(["train-guidance", "--manifest", m, "--checkpoint", str(d / "pr" / "prior.ckpt"),
                 "--out", str(d / "gd"), "--seed", "2"]) == 0
    return d


def test_simulate_is_byte_reproducible(run, tmp_path):
    assert main(["simulate", "--config", str(run / "tiny.cfg"), "--out", str(tmp_path / "again"),
                 "--seed", "7"]) == 0
    assert tree(run / "ds") == tree(tmp_path / "again")
    assert main(["simulate", "--config", str(run / "tiny.cfg"), "--out", str(tmp_path / "other"),
                 "--seed", "8"]) == 0
    assert tree(run / "ds") != tree(tmp_path / "other")


def test_simulate_layout(run):
    doc = json.loads((run / "ds" / "manifest.json").read_text())
    ids = [r["id"] for r in doc["records"]]
    assert ids == ["train-0000", "train-0001", "train-0002", "test-0000", "test-0001"]
    assert read_pfm(run / "ds" / "records" / "test-0001" / "noisy_i.pfm").shape == (16, 16)
    rr = json.loads((run / "ds" / "run_simulate.json").read_text())
    assert rr["seed"] == 7 and rr["config"]["width"] == 16
    assert set(rr["versions"]) == {"tofdiff", "numpy", "torch", "python"}
    assert len(rr["inputs"]["config"]) == 64


def test_training_outputs(run):
    lines = (run / "pr" / "loss_prior.csv").read_text().splitlines()
    assert lines[0] == "iteration,loss" and len(lines) == 4
    assert (run / "gd" / "guidance.ckpt").is_file()
    prior = json.loads((run / "pr" / "run_train-prior.json").read_text())
    guided = json.loads((run / "gd" / "run_train-guidance.json").read_text())
    assert prior["base_hash"] == guided["base_hash"]


def test_denoise_and_eval(run, tmp_path):
    m = str(run / "ds" / "manifest.json")
    ck = str(run / "gd" / "guidance.ckpt")
    assert main(["denoise", "--manifest", m, "--checkpoint", ck, "--out", str(tmp_path / "dn"), "--steps", "2"]) == 0
    for name in ("denoised_i", "denoised_q", "depth", "valid", "error"):
        assert read_pfm(tmp_path / "dn" / "test-0000" / f"{name}.pfm").shape == (16, 16)
    assert main(["eval", "--manifest", m, "--pred", str(tmp_path / "dn"), "--out", str(tmp_path / "ev")]) == 0
    rep = json.loads((tmp_path / "ev" / "report.json").read_text())
    assert [r["id"] for r in rep["records"]] == ["test-0000", "test-0001"]
    assert rep["aggregate"]["valid_pixel_count"] == sum(r["valid_pixel_count"] for r in rep["records"])
    # same seed, same bytes
    assert main(["denoise", "--manifest", m, "--checkpoint", ck, "--out", str(tmp_path / "dn2"), "--steps", "2"]) == 0
    assert tree(tmp_path / "dn") == tree(tmp_path / "dn2")


def test_eval_of_ground_truth_is_perfect(run, tmp_path):
    for rid in ("test-0000", "test-0001"):
        src = run / "ds" / "records" / rid
        dst = tmp_path / "pred" / rid
        dst.mkdir(parents=True)
        shutil.copy(src / "gt_depth.pfm", dst / "depth.pfm")
        shutil.copy(src / "gt_valid.pfm", dst / "valid.pfm")
    assert main(["eval", "--manifest", str(run / "ds" / "manifest.json"), "--pred", str(tmp_path / "pred"),
                 "--out", str(tmp_path / "ev")]) == 0
    agg = json.loads((tmp_path / "ev" / "report.json").read_text())["aggregate"]
    assert agg["mae_m"] == 0.0 and agg["delta1"] == 1.0 and agg["absrel"] == 0.0


@pytest.mark.parametrize("baseline", ["noisy", "bilateral"])
def test_eval_baselines(run, tmp_path, baseline):
    assert main(["eval", "--manifest", str(run / "ds" / "manifest.json"), "--baseline", baseline,
                 "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["source"] == f"baseline:{baseline}" and rep["aggregate"]["mae_m"] > 0


def test_confidence_and_normalize(run, tmp_path):
    m = str(run / "ds" / "manifest.json")
    assert main(["confidence", "--manifest", m, "--out", str(tmp_path / "cf")]) == 0
    stored = read_pfm(run / "ds" / "records" / "train-0001" / "confidence.pfm")
    # recomputed from float32 depth on disk, so equal to single precision
    assert np.allclose(read_pfm(tmp_path / "cf" / "train-0001" / "confidence.pfm"), stored, atol=1e-5)
    assert main(["normalize", "--manifest", m, "--out", str(tmp_path / "nm")]) == 0
    ni = read_pfm(tmp_path / "nm" / "test-0000" / "noisy_norm_i.pfm")
    nq = read_pfm(tmp_path / "nm" / "test-0000" / "noisy_norm_q.pfm")
    assert np.all(np.abs(ni) + np.abs(nq) <= 1.0 + 1e-6)


@pytest.mark.parametrize("argv", [
    [],
    ["bogus", "--out", "x"],
    ["simulate"],
    ["simulate", "--out", "x", "--frobnicate"],
    ["simulate", "--out", "x", "--seed", "-1"],
    ["simulate", "--out", "x", "--seed", str(2**64)],
    ["denoise", "--out", "x", "--manifest", "m", "--checkpoint", "c", "--steps", "0"],
    ["eval", "--out", "x", "--manifest", "m"],
])
def test_usage_errors_exit_1(argv, capsys):
    assert main(argv) == 1
    assert "usage" in capsys.readouterr().err


def test_data_errors_exit_2(run, tmp_path, capsys):
    m = str(run / "ds" / "manifest.json")
    assert main(["eval", "--manifest", str(tmp_path / "nope.json"), "--baseline", "noisy", "--out", str(tmp_path)]) == 2
    # prior-only checkpoint cannot denoise
    assert main(["denoise", "--manifest", m, "--checkpoint", str(run / "pr" / "prior.ckpt"),
                 "--out", str(tmp_path / "d")]) == 2
    # model config disagreeing with the checkpoint
    (tmp_path / "wide.cfg").write_text(TINY_CFG.replace("base_width = 4", "base_width = 8"))
    assert main(["denoise", "--manifest", m, "--checkpoint", str(run / "gd" / "guidance.ckpt"),
                 "--config", str(tmp_path / "wide.cfg"), "--out", str(tmp_path / "d")]) == 2
    assert "does not match checkpoint" in capsys.readouterr().err
    (tmp_path / "bad.cfg").write_text("nonsense = 1\n")
    assert main(["simulate", "--config", str(tmp_path / "bad.cfg"), "--out", str(tmp_path / "s")]) == 2
    assert main(["eval", "--manifest", m, "--pred", str(tmp_path / "empty"), "--out", str(tmp_path / "e")]) == 2
    (tmp_path / "junk.ckpt").write_bytes(b"junk")
    assert main(["denoise", "--manifest", m, "--checkpoint", str(tmp_path / "junk.ckpt"),
                 "--out", str(tmp_path / "d")]) == 2
