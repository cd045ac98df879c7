"""Command-line surface: simulate -> train-prior -> train-guidance -> denoise -> eval.

Every invocation writes all of its outputs under ``--out`` together with a
``run_<command>.json`` record (config echo, seeds, input digests, library
versions). Exit status is 0 on success, 1 on a usage error and 2 on a data
error (bad manifest, checkpoint, config or image file).
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import platform
import sys
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from . import __version__
from .checkpoint import CheckpointError, load, pack_models, save, unpack_models
from .config import ConfigError, RunConfig, load_config, parse_config
from .confidence import confidence_map
from .evalkit import aggregate, bilateral_baseline, compute_metrics, error_map
from .manifest import (
    DatasetManifest,
    ManifestError,
    ensure_dir,
    load_record,
    read_manifest,
    write_manifest,
    write_record,
)
from .pfm import PFMError, read_pfm, write_atomic, write_pfm
from .pipeline import denoise_record, gt_depth, noisy_depth
from .rangecodec import normalize_pair
from .simulate import record_seed, simulate_record
from .tofmodel import DepthMap, RawFrame
from .training import parameter_hash, train_guidance, train_prior

U64 = 2**64
MODEL_KEYS = ("in_channels", "base_width", "depth_levels", "time_embed_dim", "guidance_hidden")
SCHEDULE_KEYS = ("T", "beta_start", "beta_end")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < U64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 unsigned bits: {text}")
    return v


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tofdiff", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"tofdiff {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def cmd(name, help_, manifest=False, checkpoint=False, config=True):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--out", required=True, type=Path, help="output directory")
        s.add_argument("--seed", type=_u64, default=0, help="64-bit seed (default 0)")
        if config:
            s.add_argument("--config", type=Path, help="key = value run configuration")
        if manifest:
            s.add_argument("--manifest", required=True, type=Path, help="dataset manifest.json")
        if checkpoint:
            s.add_argument("--checkpoint", required=True, type=Path, help="model checkpoint")
        return s

    cmd("simulate", "render a synthetic train/test dataset")
    cmd("confidence", "recompute confidence maps from noisy depth", manifest=True, config=False)
    cmd("normalize", "write range-normalized I/Q planes", manifest=True, config=False)
    cmd("train-prior", "fit the base prior on clean correlations", manifest=True)
    cmd("train-guidance", "fit the guidance branch on a frozen prior", manifest=True, checkpoint=True)
    s = cmd("denoise", "guided DDIM denoising of every record in a split", manifest=True, checkpoint=True)
    s.add_argument("--steps", type=_positive, default=None, help="sampling steps (default 20)")
    s.add_argument("--split", default="test")
    s.add_argument("--mode", choices=("full", "no_confidence", "hdr"), default=None,
                   help="guidance input variant (default: the one the checkpoint was trained with)")
    s = cmd("eval", "score predictions (or a baseline) against ground truth", manifest=True, config=False)
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--pred", type=Path, help="directory written by 'denoise'")
    src.add_argument("--baseline", choices=("noisy", "bilateral"))
    s.add_argument("--split", default="test")
    return p


# helpers ------------------------------------------------------------------------------------------


def _digest(path: Optional[Path]) -> Optional[str]:
    if path is None:
        return None
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _versions() -> dict:
    return {"tofdiff": __version__, "numpy": np.__version__, "torch": torch.__version__,
            "python": platform.python_version()}


def _write_json(path: Path, doc) -> None:
    write_atomic(path, (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode())


def _run_record(args, cfg: Optional[RunConfig], extra: dict) -> None:
    # paths are left out on purpose: inputs are identified by content digest,
    # so the same inputs in another directory give the same record
    doc = {
        "command": args.command,
        "seed": args.seed,
        "config": None if cfg is None else cfg.to_dict(),
        "inputs": {k: _digest(getattr(args, k, None)) for k in ("config", "manifest", "checkpoint")},
        "versions": _versions(),
    }
    doc.update(extra)
    _write_json(args.out / f"run_{args.command}.json", doc)


def _config(args) -> RunConfig:
    return load_config(args.config) if getattr(args, "config", None) else RunConfig()


def _checkpoint_config(meta: dict, args) -> RunConfig:
    """Config stored in the checkpoint, or ``--config`` after checking it agrees."""
    try:
        stored = parse_config("", RunConfig(**meta["config"]))
    except (KeyError, TypeError) as exc:
        raise DataError(f"checkpoint lacks a usable config echo: {exc}") from None
    if getattr(args, "config", None) is None:
        return stored
    cfg = load_config(args.config)
    bad = [k for k in MODEL_KEYS + SCHEDULE_KEYS if getattr(cfg, k) != getattr(stored, k)]
    if bad:
        raise DataError("config does not match checkpoint: " + ", ".join(
            f"{k}={getattr(cfg, k)} vs {getattr(stored, k)}" for k in bad))
    return cfg


def _loss_csv(path: Path, history) -> None:
    lines = ["iteration,loss\n"] + [f"{i},{v!r}\n" for i, v in enumerate(history)]
    write_atomic(path, "".join(lines).encode())


def _records(m: DatasetManifest, split: Optional[str]):
    recs = m.records if split is None else m.split(split)
    if not recs:
        raise ManifestError(f"manifest has no {split!r} records")
    return recs


# subcommands --------------------------------------------------------------------------------------


def cmd_simulate(args) -> dict:
    cfg = _config(args)
    sim = cfg.sim()
    m = DatasetManifest(sim.frequency_hz, sim.scale_const, dataclasses.asdict(sim.noise), [], root=args.out)
    for split, n, start in (("train", cfg.train_records, 0), ("test", cfg.test_records, cfg.train_records)):
        for k in range(n):
            seed = record_seed(args.seed, start + k)
            entry = write_record(args.out, f"{split}-{k:04d}", simulate_record(seed, sim))
            entry["split"] = split
            m.records.append(entry)
    write_manifest(m, args.out / "manifest.json")
    return {"config": cfg}


def cmd_confidence(args) -> dict:
    m = read_manifest(args.manifest)
    for r in m.records:
        valid = read_pfm(m.path(r, "noisy_valid")) > 0.5
        depth = DepthMap(read_pfm(m.path(r, "noisy_depth")).astype(np.float64), valid)
        write_pfm(ensure_dir(args.out / r["id"]) / "confidence.pfm", confidence_map(depth))
    return {}


def cmd_normalize(args) -> dict:
    m = read_manifest(args.manifest)
    for r in m.records:
        d = ensure_dir(args.out / r["id"])
        for kind in ("ideal", "noisy"):
            frame = RawFrame(read_pfm(m.path(r, f"{kind}_i")).astype(np.float64),
                             read_pfm(m.path(r, f"{kind}_q")).astype(np.float64), m.frequency_hz)
            nf = normalize_pair(frame, m.scale_const)
            write_pfm(d / f"{kind}_norm_i.pfm", nf.i_plane)
            write_pfm(d / f"{kind}_norm_q.pfm", nf.q_plane)
            write_pfm(d / f"{kind}_clamped.pfm", nf.clamped.astype(np.float64))
    return {}


def _train_meta(stage: str, cfg: RunConfig, tcfg, seed: int, history) -> dict:
    return {
        "stage": stage,
        "config": cfg.to_dict(),
        "model": dataclasses.asdict(cfg.model()),
        "schedule": {k: getattr(cfg, k) for k in SCHEDULE_KEYS},
        "train": dataclasses.asdict(tcfg),
        "guidance_mode": tcfg.guidance_mode,
        "seed": seed,
        "loss_history": [float(v) for v in history],
    }


def cmd_train_prior(args) -> dict:
    cfg = _config(args)
    m = read_manifest(args.manifest)
    records = [load_record(m, r) for r in _records(m, "train")]
    tcfg = cfg.train("prior", args.seed)
    res = train_prior(records, tcfg, cfg.model(), cfg.schedule())
    meta = _train_meta("prior", cfg, tcfg, args.seed, res.loss_history)
    save(args.out / "prior.ckpt", pack_models(meta, res.base))
    _loss_csv(args.out / "loss_prior.csv", res.loss_history)
    return {"config": cfg, "base_hash": parameter_hash(res.base)}


def cmd_train_guidance(args) -> dict:
    m = read_manifest(args.manifest)
    ckpt = load(args.checkpoint)
    cfg = _checkpoint_config(ckpt.meta, args)
    base, _ = unpack_models(ckpt)
    records = [load_record(m, r) for r in _records(m, "train")]
    tcfg = cfg.train("guidance", args.seed)
    res = train_guidance(base, records, tcfg, cfg.schedule())
    meta = _train_meta("guidance", cfg, tcfg, args.seed, res.loss_history)
    meta["prior"] = {"seed": ckpt.meta.get("seed"), "base_hash": parameter_hash(base)}
    save(args.out / "guidance.ckpt", pack_models(meta, base, res.guide))
    _loss_csv(args.out / "loss_guidance.csv", res.loss_history)
    return {"config": cfg, "base_hash": parameter_hash(base)}


def cmd_denoise(args) -> dict:
    m = read_manifest(args.manifest)
    ckpt = load(args.checkpoint)
    cfg = _checkpoint_config(ckpt.meta, args)
    base, guide = unpack_models(ckpt)
    if guide is None:
        raise DataError("checkpoint has no guidance branch; run train-guidance first")
    mode = args.mode or ckpt.meta.get("guidance_mode", "full")
    steps = args.steps if args.steps is not None else cfg.steps
    sched = cfg.schedule()
    ids = []
    for k, r in enumerate(_records(m, args.split)):
        rec = load_record(m, r)
        sampler = cfg.sampler((args.seed + k) % U64, steps)
        frame, depth = denoise_record(base, guide, rec, sched, sampler, mode)
        err, _ = error_map(depth, gt_depth(rec))
        d = ensure_dir(args.out / r["id"])
        write_pfm(d / "denoised_i.pfm", frame.i_plane)
        write_pfm(d / "denoised_q.pfm", frame.q_plane)
        write_pfm(d / "depth.pfm", depth.values)
        write_pfm(d / "valid.pfm", depth.valid_mask.astype(np.float64))
        write_pfm(d / "error.pfm", err)
        ids.append(r["id"])
    _write_json(args.out / "predictions.json", {"split": args.split, "records": ids, "mode": mode,
                                                 "steps": steps})
    return {"config": cfg, "steps": steps, "mode": mode}


def _prediction(args, m: DatasetManifest, r: dict) -> DepthMap:
    if args.baseline is not None:
        rec = load_record(m, r)
        noisy = noisy_depth(rec)
        return noisy if args.baseline == "noisy" else bilateral_baseline(noisy)
    d = args.pred / r["id"]
    try:
        values = read_pfm(d / "depth.pfm").astype(np.float64)
        valid = read_pfm(d / "valid.pfm") > 0.5
    except FileNotFoundError:
        raise DataError(f"no prediction for record {r['id']} under {args.pred}") from None
    return DepthMap(values, valid)


def cmd_eval(args) -> dict:
    m = read_manifest(args.manifest)
    per = []
    reports = []
    for r in _records(m, args.split):
        gv = read_pfm(m.path(r, "gt_valid")) > 0.5
        gt = DepthMap(read_pfm(m.path(r, "gt_depth")).astype(np.float64), gv)
        rep = compute_metrics(_prediction(args, m, r), gt)
        reports.append(rep)
        per.append(dict(dataclasses.asdict(rep), id=r["id"]))
    agg = aggregate(reports)
    source = f"baseline:{args.baseline}" if args.baseline else "pred"
    _write_json(args.out / "report.json", {"split": args.split, "source": source,
                                           "aggregate": dataclasses.asdict(agg), "records": per})
    return {"aggregate": dataclasses.asdict(agg)}


COMMANDS = {
    "simulate": cmd_simulate,
    "confidence": cmd_confidence,
    "normalize": cmd_normalize,
    "train-prior": cmd_train_prior,
    "train-guidance": cmd_train_guidance,
    "denoise": cmd_denoise,
    "eval": cmd_eval,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        ensure_dir(args.out)
        extra = COMMANDS[args.command](args)
        cfg = extra.pop("config", None)
        _run_record(args, cfg, extra)
    except (DataError, ConfigError, ManifestError, CheckpointError, PFMError) as exc:
        print(f"tofdiff {args.command}: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"tofdiff {args.command}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
