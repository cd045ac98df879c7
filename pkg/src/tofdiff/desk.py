"""End-to-end desk experiment: one prior, three guidance variants, one test set.

The variants differ only in what the guidance branch sees:

``full``           normalized noisy planes plus the confidence map
``no_confidence``  the confidence channel zeroed in training and at inference
``hdr``            the noisy planes without range normalization

Every variant shares the frozen prior, the training batch stream and the
sampler seeds, so the MAE differences come from the conditioning alone.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from .config import RunConfig
from .evalkit import MetricsReport, aggregate, bilateral_baseline, compute_metrics
from .pipeline import evaluate_denoiser, evaluate_noisy, gt_depth, noisy_depth
from .simulate import record_seed, simulate_record
from .training import parameter_hash, train_guidance, train_prior

VARIANTS = ("full", "no_confidence", "hdr")


@dataclass
class DeskReport:
    noisy: MetricsReport
    bilateral: MetricsReport
    guided: dict[str, MetricsReport] = field(default_factory=dict)
    final_loss: dict[str, float] = field(default_factory=dict)
    prior_hash: str = ""
    seconds: dict[str, float] = field(default_factory=dict)

    def mae(self, variant: str) -> float:
        return self.guided[variant].mae_m

    def summary(self) -> str:
        rows = [("noisy input", self.noisy), ("bilateral", self.bilateral)]
        rows += [(f"guided/{v}", r) for v, r in self.guided.items()]
        lines = [f"{'variant':<22}{'MAE [m]':>10}{'AbsRel':>10}{'delta1':>10}"]
        lines += [f"{name:<22}{r.mae_m:>10.4f}{r.absrel:>10.4f}{r.delta1:>10.4f}" for name, r in rows]
        lines.append(f"total {sum(self.seconds.values()):.0f} s")
        return "\n".join(lines)


def desk_datasets(cfg: RunConfig, seed: int):
    """Train and test records drawn exactly as ``tofdiff simulate`` draws them."""
    sim = cfg.sim()
    train = [simulate_record(record_seed(seed, k), sim) for k in range(cfg.train_records)]
    n = cfg.train_records
    test = [simulate_record(record_seed(seed, n + k), sim) for k in range(cfg.test_records)]
    return train, test


def run_desk_experiment(cfg: RunConfig = RunConfig(), seed: int = 0, variants=VARIANTS,
                        log: Optional[Callable[[str], None]] = None) -> DeskReport:
    log = log or (lambda msg: None)
    clock = {}
    t0 = time.perf_counter()
    train, test = desk_datasets(cfg, seed)
    sched = cfg.schedule()
    noisy = evaluate_noisy(test)
    bil = aggregate([compute_metrics(bilateral_baseline(noisy_depth(r)), gt_depth(r)) for r in test])
    clock["simulate"] = time.perf_counter() - t0
    log(f"simulated {len(train)} train / {len(test)} test records; noisy MAE {noisy.mae_m:.4f} m")

    t0 = time.perf_counter()
    prior = train_prior(train, cfg.train("prior", seed), cfg.model(), sched)
    clock["prior"] = time.perf_counter() - t0
    report = DeskReport(noisy, bil, prior_hash=parameter_hash(prior.base), seconds=clock)
    report.final_loss["prior"] = prior.windowed()[-1] if prior.loss_history else float("nan")
    log(f"prior: {cfg.iterations} iterations in {clock['prior']:.0f} s")

    for v in variants:
        t0 = time.perf_counter()
        tcfg = replace(cfg.train("guidance", seed + 1), guidance_mode=v)
        res = train_guidance(prior.base, train, tcfg, sched)
        report.final_loss[v] = res.windowed()[-1] if res.loss_history else float("nan")
        report.guided[v] = evaluate_denoiser(prior.base, res.guide, test, sched, cfg.sampler(seed), v)
        clock[v] = time.perf_counter() - t0
        log(f"guided/{v}: MAE {report.guided[v].mae_m:.4f} m in {clock[v]:.0f} s")
    return report
