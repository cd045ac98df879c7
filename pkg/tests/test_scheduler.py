import math

import numpy as np
import pytest
import torch

from tofdiff.scheduler import (
    SamplerConfig,
    ddim_sample,
    ddim_step,
    ddim_timesteps,
    make_schedule,
    q_sample,
)

# 40-digit mpmath cumulative products of the default linear schedule
AB_1 = 0.9999
AB_2 = 0.99978009207207207206207687
AB_50 = 0.97101572293944044279114054
AB_500 = 0.07858724288177823308793418
AB_T = 0.0000403582976537568245354913


def cumprod_oracle(T, b0, b1):
    """Scalar loop over the 1-based schedule, independent of numpy cumprod."""
    out, ab = [], 1.0
    for k in range(T):
        beta = b0 + (b1 - b0) * k / (T - 1) if T > 1 else b0
        ab *= 1.0 - beta
        out.append(ab)
    return out


def test_single_step_schedule():
    s = make_schedule(1, 0.5, 0.5)
    assert list(s.beta) == [0.5] and list(s.alpha_bar) == [0.5]


def test_default_schedule_against_oracles():
    s = make_schedule()
    oracle = cumprod_oracle(1000, 1e-4, 0.02)
    assert np.allclose(s.alpha_bar, oracle, rtol=1e-9, atol=0)
    for t, ref in [(1, AB_1), (2, AB_2), (50, AB_50), (500, AB_500), (1000, AB_T)]:
        assert s.alpha_bar_at(t) == pytest.approx(ref, rel=1e-9)
    assert s.alpha_bar_at(0) == 1.0


def test_schedule_invariants():
    s = make_schedule()
    assert np.all(np.diff(s.beta) >= 0) and np.all((s.beta > 0) & (s.beta < 1))
    assert np.all(np.diff(s.alpha_bar) < 0) and s.alpha_bar[-1] > 0
    assert np.allclose(np.sqrt(s.alpha_bar) ** 2 + np.sqrt(1 - s.alpha_bar) ** 2, 1.0, atol=1e-12)


@pytest.mark.parametrize("args", [(0, 1e-4, 0.02), (10, 0.0, 0.02), (10, 0.03, 0.02), (10, 1e-4, 1.0)])
def test_schedule_errors(args):
    with pytest.raises(ValueError):
        make_schedule(*args)


def test_schedule_text_dump():
    txt = make_schedule(3, 0.1, 0.3).to_text().splitlines()
    assert txt[0] == "# T=3" and len(txt) == 4 and txt[1].startswith("1 0.1 ")


def test_q_sample_examples():
    s = make_schedule()
    x0 = np.array([1.0, -2.0])
    assert np.allclose(q_sample(x0, 10, np.zeros(2), s), math.sqrt(s.alpha_bar_at(10)) * x0)
    eps = np.array([0.5, 0.1])
    assert np.allclose(q_sample(np.zeros(2), 10, eps, s), math.sqrt(1 - s.alpha_bar_at(10)) * eps)


def test_q_sample_closed_form():
    # T=1 with beta = 0.75 gives alpha_bar_1 = 0.25
    s = make_schedule(1, 0.75, 0.75)
    assert q_sample(np.array(2.0), 1, np.array(1.0), s) == pytest.approx(1.8660254037844386468, rel=1e-15)


def test_q_sample_errors():
    s = make_schedule(10)
    with pytest.raises(ValueError):
        q_sample(np.zeros(2), 0, np.zeros(2), s)
    with pytest.raises(ValueError):
        q_sample(np.zeros(2), 11, np.zeros(2), s)
    with pytest.raises(ValueError):
        q_sample(np.zeros(2), 1, np.zeros(3), s)


def test_q_sample_variance_preserving():
    s = make_schedule()
    g = torch.Generator().manual_seed(0)
    x0 = torch.randn(200_000, generator=g, dtype=torch.float64)
    eps = torch.randn(200_000, generator=g, dtype=torch.float64)
    for t in (1, 300, 1000):
        assert float(q_sample(x0, t, eps, s).var()) == pytest.approx(1.0, rel=0.02)


def test_timestep_subsequence():
    ts = ddim_timesteps(1000, 20)
    assert ts == list(range(1000, 0, -50))
    # as 0-based schedule array indices this is 999, 949, ..., 49
    assert [t - 1 for t in ts] == list(range(999, 48, -50))
    assert ddim_timesteps(1, 1) == [1]
    assert ddim_timesteps(10, 10) == list(range(10, 0, -1))
    with pytest.raises(ValueError):
        ddim_timesteps(10, 11)


def test_ddim_step_recovers_x0_with_true_noise():
    s = make_schedule()
    g = torch.Generator().manual_seed(1)
    x0 = torch.randn(3, 8, 8, generator=g, dtype=torch.float64)
    eps = torch.randn(3, 8, 8, generator=g, dtype=torch.float64)
    for t in (1, 500, 1000):
        x_t = q_sample(x0, t, eps, s)
        rec = ddim_step(x_t, eps, t, 0, s, 0.0)
        assert torch.allclose(rec, x0, rtol=1e-10, atol=1e-10 * float(x0.abs().max()))


def test_ddim_noiseless_trajectory():
    s = make_schedule()
    x0 = torch.linspace(-1, 1, 10, dtype=torch.float64)
    x_t = math.sqrt(s.alpha_bar_at(700)) * x0
    out = ddim_step(x_t, torch.zeros_like(x0), 700, 650, s, 0.0)
    assert torch.allclose(out, math.sqrt(s.alpha_bar_at(650)) * x0, atol=1e-14)


def test_ddim_step_deterministic_and_errors():
    s = make_schedule()
    x = torch.randn(5, dtype=torch.float64)
    e = torch.randn(5, dtype=torch.float64)
    assert torch.equal(ddim_step(x, e, 100, 50, s), ddim_step(x, e, 100, 50, s))
    with pytest.raises(ValueError):
        ddim_step(x, e, 50, 50, s)
    with pytest.raises(ValueError):
        ddim_step(x, e, 50, 10, s, eta=1.5)


def test_ddim_eta_one_adds_noise():
    s = make_schedule()
    x = torch.randn(5, dtype=torch.float64)
    e = torch.randn(5, dtype=torch.float64)
    z = torch.ones(5, dtype=torch.float64)
    a = ddim_step(x, e, 100, 50, s, 1.0, z)
    b = ddim_step(x, e, 100, 50, s, 0.0)
    assert not torch.allclose(a, b)


def test_zero_model_matches_oracle_loop():
    s = make_schedule()
    cfg = SamplerConfig(20, 0.0, seed=3)
    out = ddim_sample(lambda x, t, g: torch.zeros_like(x), None, cfg, s, (2, 4, 4), dtype=torch.float64)
    x = torch.randn((2, 4, 4), generator=torch.Generator().manual_seed(3), dtype=torch.float64)
    ts = list(range(1000, 0, -50)) + [0]
    for t, tp in zip(ts[:-1], ts[1:]):
        ab_t = s.alpha_bar[t - 1]
        ab_p = 1.0 if tp == 0 else s.alpha_bar[tp - 1]
        x = x * math.sqrt(ab_p / ab_t)
    assert torch.allclose(out, x, rtol=1e-12)
    # the chain telescopes to x_T / sqrt(alpha_bar_1000)
    x_T = torch.randn((2, 4, 4), generator=torch.Generator().manual_seed(3), dtype=torch.float64)
    assert torch.allclose(out, x_T / math.sqrt(s.alpha_bar[-1]), rtol=1e-10)


def cheating_oracle(target, s):
    def eps_model(x, t, g):
        ab = s.alpha_bar_at(t)
        return (x - math.sqrt(ab) * target) / math.sqrt(1 - ab)

    return eps_model


@pytest.mark.parametrize("steps", [1, 7, 20, 1000])
@pytest.mark.parametrize("seed", [0, 5])
def test_perfect_oracle_recovers_target(steps, seed):
    s = make_schedule()
    target = torch.randn(1, 3, 8, 8, generator=torch.Generator().manual_seed(42), dtype=torch.float64)
    out = ddim_sample(cheating_oracle(target, s), None, SamplerConfig(steps, 0.0, seed), s, target.shape,
                      dtype=torch.float64)
    assert torch.allclose(out, target, atol=1e-6)


def test_sampler_determinism_and_shape_check():
    s = make_schedule(100)
    model = lambda x, t, g: 0.1 * x
    a = ddim_sample(model, None, SamplerConfig(10, 0.5, 9), s, (3, 3))
    b = ddim_sample(model, None, SamplerConfig(10, 0.5, 9), s, (3, 3))
    assert torch.equal(a, b) and torch.isfinite(a).all()
    with pytest.raises(ValueError, match="shape"):
        ddim_sample(lambda x, t, g: x[:1], None, SamplerConfig(5), s, (3, 3))


def test_sampler_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(0)
    with pytest.raises(ValueError):
        SamplerConfig(eta=-0.1)


def test_clip_sample_bounds_estimates():
    s = make_schedule()
    x = torch.full((1, 4), 3.0, dtype=torch.float64)
    eps = torch.zeros_like(x)
    # x0 estimate is 3/sqrt(ab) before clipping; clipped to 1 and the noise re-derived
    out = ddim_step(x, eps, 1000, 0, s, clip_sample=1.0)
    assert torch.equal(out, torch.ones_like(x))
    mid = ddim_step(x, eps, 1000, 500, s, clip_sample=1.0)
    ab_t, ab_p = s.alpha_bar_at(1000), s.alpha_bar_at(500)
    eps_c = (3.0 - math.sqrt(ab_t)) / math.sqrt(1 - ab_t)
    assert mid[0, 0].item() == pytest.approx(math.sqrt(ab_p) + math.sqrt(1 - ab_p) * eps_c, rel=1e-12)


def test_clip_sample_keeps_in_range_oracle_exact():
    s = make_schedule()
    target = torch.rand(1, 3, 8, 8, generator=torch.Generator().manual_seed(1), dtype=torch.float64) * 2 - 1
    out = ddim_sample(cheating_oracle(target, s), None, SamplerConfig(20, 0.0, 0, clip_sample=1.0), s,
                      target.shape, dtype=torch.float64)
    assert torch.allclose(out, target, atol=1e-9)
    with pytest.raises(ValueError):
        SamplerConfig(clip_sample=0.0)
