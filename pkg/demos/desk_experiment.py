"""
The desk experiment
===================

Train a small diffusion prior on simulated ToF correlations, attach three
guidance branches that see different conditioning, and compare their depth
error on held-out scenes against the noisy input.

On one CPU core the default configuration takes roughly twenty minutes.
Pass ``--quick`` for a two-minute smoke run whose numbers mean little.
"""

import sys
from dataclasses import replace

import torch

from tofdiff.config import RunConfig
from tofdiff.desk import run_desk_experiment

torch.set_num_threads(1)

cfg = RunConfig()
if "--quick" in sys.argv:
    cfg = replace(cfg, train_records=20, test_records=4, iterations=200, guidance_iterations=200)

report = run_desk_experiment(cfg, seed=0, log=print)
print()
print(report.summary())

full = report.mae("full")
print()
print(f"guided / noisy MAE ratio: {full / report.noisy.mae_m:.3f}")
print(f"confidence channel helps: {full < report.mae('no_confidence')}")
print(f"range normalization helps: {full < report.mae('hdr')}")
