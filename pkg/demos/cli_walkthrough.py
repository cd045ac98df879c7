"""
The command line, end to end
============================

Every stage of the pipeline is a ``tofdiff`` subcommand that reads and writes
plain files: PFM images, a JSON manifest, binary checkpoints and JSON
reports. This script drives them in order on a deliberately tiny setup, so
it finishes in well under a minute. The scores are meaningless at this size;
the point is the file flow.
"""

import json
import sys
import tempfile
from pathlib import Path

from tofdiff.cli import main

work = Path(tempfile.mkdtemp(prefix="tofdiff-"))
cfg = work / "tiny.cfg"
cfg.write_text("""\
width = 32
height = 32
train_records = 8
test_records = 2
base_width = 8
depth_levels = 2
iterations = 100
guidance_iterations = 100
crop_size = 16
""")
manifest = work / "data" / "manifest.json"


def run(*argv):
    print("$ tofdiff", " ".join(argv))
    code = main(list(argv))
    if code:
        sys.exit(code)


run("simulate", "--config", str(cfg), "--out", str(work / "data"), "--seed", "1")
run("train-prior", "--config", str(cfg), "--manifest", str(manifest), "--out", str(work / "prior"))
run("train-guidance", "--config", str(cfg), "--manifest", str(manifest),
    "--checkpoint", str(work / "prior" / "prior.ckpt"), "--out", str(work / "guided"))
run("denoise", "--config", str(cfg), "--manifest", str(manifest),
    "--checkpoint", str(work / "guided" / "guidance.ckpt"), "--out", str(work / "pred"))
run("eval", "--manifest", str(manifest), "--pred", str(work / "pred"), "--out", str(work / "eval"))
run("eval", "--manifest", str(manifest), "--baseline", "noisy", "--out", str(work / "eval-noisy"))

for name in ("eval", "eval-noisy"):
    agg = json.loads((work / name / "report.json").read_text())["aggregate"]
    print(f"{name:<11} MAE {agg['mae_m']:.4f} m  delta1 {agg['delta1']:.3f}")

print("\nfiles under", work)
for p in sorted(work.rglob("*")):
    if p.is_file() and "records" not in p.parts and "pred" not in p.parts:
        print("  ", p.relative_to(work))
