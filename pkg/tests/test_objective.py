import math

import pytest
import torch
from hypothesis import given, settings, strategies as st

from gnm.baselines import build_model
from gnm.config import TrainConfig, micro_model_config
from gnm.model import Noise
from gnm.objective import (DomainError, LossReport, NonFiniteLoss, Schedule, TrainState, apply_mask_curriculum,
                           compute_loss, kl_bernoulli, kl_bernoulli_logits, kl_gaussian, schedule_at, step_seed,
                           train_step)

pos = st.floats(0.05, 5.0)
real = st.floats(-5.0, 5.0)
prob = st.floats(0.01, 0.99)


# -- KL ------------------------------------------------------------------------


@given(mq=real, sq=pos, mp=real, sp=pos)
def test_kl_gaussian_scalar_oracle(mq, sq, mp, sp):
    expected = math.log(sp / sq) + (sq ** 2 + (mq - mp) ** 2) / (2 * sp ** 2) - 0.5
    got = kl_gaussian(torch.tensor([mq], dtype=torch.float64), torch.tensor([sq], dtype=torch.float64),
                      torch.tensor([mp], dtype=torch.float64), torch.tensor([sp], dtype=torch.float64))
    assert got.item() == pytest.approx(expected, rel=1e-9, abs=1e-12)
    assert got.item() >= -1e-12


@given(q=prob, p=prob)
def test_kl_bernoulli_scalar_oracle(q, p):
    expected = q * math.log(q / p) + (1 - q) * math.log((1 - q) / (1 - p))
    got = kl_bernoulli(torch.tensor([q], dtype=torch.float64), torch.tensor([p], dtype=torch.float64))
    assert got.item() == pytest.approx(expected, rel=1e-9, abs=1e-12)


@given(lq=st.floats(-8, 8), lp=st.floats(-8, 8))
def test_kl_bernoulli_logits_agrees(lq, lp):
    a = kl_bernoulli_logits(torch.tensor(lq, dtype=torch.float64), torch.tensor(lp, dtype=torch.float64))
    b = kl_bernoulli(torch.sigmoid(torch.tensor([lq], dtype=torch.float64)),
                     torch.sigmoid(torch.tensor([lp], dtype=torch.float64)), eps=0)
    assert a.item() == pytest.approx(b.item(), rel=1e-7, abs=1e-10)


@settings(max_examples=30)
@given(m=st.lists(real, min_size=1, max_size=6), s=st.lists(pos, min_size=6, max_size=6), q=prob)
def test_kl_of_identical_distributions_is_zero(m, s, q):
    mu = torch.tensor(m)
    sigma = torch.tensor(s[:len(m)])
    assert kl_gaussian(mu, sigma, mu, sigma).item() == 0.0
    assert kl_bernoulli(torch.tensor([q]), torch.tensor([q])).item() == 0.0


def test_kl_domain_errors():
    with pytest.raises(DomainError):
        kl_gaussian(torch.zeros(1), torch.zeros(1), torch.zeros(1), torch.ones(1))
    with pytest.raises(DomainError):
        kl_bernoulli(torch.tensor([1.5]), torch.tensor([0.5]))
    with pytest.raises(DomainError):
        kl_bernoulli(torch.tensor([float("nan")]), torch.tensor([0.5]))


# -- schedules -----------------------------------------------------------------


def test_schedule_endpoints():
    assert schedule_at(0).beta_b == 50.0
    assert schedule_at(50_000).beta_b == 1.0
    assert schedule_at(0).beta_g == 0.0
    assert schedule_at(100_000).beta_g == 1.0
    assert schedule_at(10**6).beta_b == 1.0 and schedule_at(10**6).beta_g == 1.0


@given(a=st.integers(0, 200_000), b=st.integers(0, 200_000))
def test_schedule_monotone(a, b):
    a, b = sorted((a, b))
    sa, sb = schedule_at(a), schedule_at(b)
    assert sa.beta_b >= sb.beta_b
    assert sa.beta_g <= sb.beta_g
    assert sa.tau >= sb.tau
    assert 0.0 <= sa.beta_g <= 1.0 and 1.0 <= sa.beta_b <= 50.0


def test_mask_curriculum():
    m = torch.rand(2, 3, 1, 4, 4)
    forced = apply_mask_curriculum(m, 9_999)
    assert torch.equal(forced, torch.full_like(m, 0.9))
    assert apply_mask_curriculum(m, 10_000) is m
    assert schedule_at(9_999).mask_force and not schedule_at(10_000).mask_force


def test_negative_step():
    with pytest.raises(ValueError):
        schedule_at(-1)


# -- loss and step ---------------------------------------------------------------


def _report(**kw):
    base = dict(recon=torch.tensor(-10.0), kl_g=torch.tensor(2.0), kl_b=torch.tensor(1.0), kl_s=torch.tensor(3.0),
                aux_b=torch.tensor(0.5), aux_o_pres=torch.tensor(0.25), aux_o_wherewhat=torch.tensor(0.75))
    base.update(kw)
    return LossReport(**base)


def test_loss_report_combination():
    r = _report(beta_g=0.5, beta_b=10.0, beta=2.0)
    expected = 10.0 + 2.0 * (0.5 * 2.0 + 1.0 + 3.0) + 10.0 * 0.5 + 0.25 + 0.75
    assert r.total.item() == pytest.approx(expected)
    rec = r.log_record(7, 1.5)
    assert rec["step"] == 7 and rec["aux_o"] == pytest.approx(1.0)


@pytest.fixture
def micro_state():
    torch.manual_seed(0)
    model = build_model(micro_model_config())
    return TrainState.create(model, TrainConfig(batch=2, mask_force_steps=0))


def test_loss_terms_are_finite_and_nonnegative(micro_state):
    rep = compute_loss(micro_state.model, torch.rand(2, 3, 16, 16), Noise(0), 0, micro_state.schedule)
    d = rep.as_dict()
    assert all(math.isfinite(v) for v in d.values())
    for k in ("kl_g", "kl_b", "kl_s", "aux_b", "aux_o_pres", "aux_o_wherewhat"):
        assert d[k] >= -1e-5, k
    assert d["beta_b"] == 50.0 and d["beta_g"] == 0.0


def test_train_step_updates_parameters(micro_state):
    before = [p.detach().clone() for p in micro_state.model.parameters()]
    state, rep = train_step(torch.rand(2, 3, 16, 16), micro_state)
    assert state.step == 1 and rep is not None
    assert any(not torch.equal(a, b) for a, b in zip(before, state.model.parameters()))


def _poison(model):
    next(model.parameters()).grad.fill_(float("nan"))


def test_non_finite_gradient_skips_update(micro_state):
    before = [p.detach().clone() for p in micro_state.model.parameters()]
    state, _ = train_step(torch.rand(2, 3, 16, 16), micro_state, grad_hook=_poison)
    assert state.step == 1 and state.skipped == 1
    assert state.events[-1]["event"] == "skipped-non-finite"
    assert all(torch.equal(a, b) for a, b in zip(before, state.model.parameters()))
    state, _ = train_step(torch.rand(2, 3, 16, 16), state)
    assert state.skipped == 0


def test_ten_consecutive_skips_abort(micro_state):
    x = torch.rand(2, 3, 16, 16)
    for _ in range(9):
        train_step(x, micro_state, grad_hook=_poison)
    with pytest.raises(NonFiniteLoss):
        train_step(x, micro_state, grad_hook=_poison)


def test_step_seed_depends_on_both():
    assert step_seed(0, 1) == step_seed(0, 1)
    assert len({step_seed(0, 1), step_seed(1, 0), step_seed(0, 2)}) == 3


def test_beta_b_midpoint():
    assert schedule_at(25_000).beta_b == pytest.approx(25.5)


def test_mask_decoder_gets_no_gradient_while_forced():
    torch.manual_seed(0)
    model = build_model(micro_model_config())
    last = [m for m in model.glimpse_decoder.modules() if isinstance(m, torch.nn.Conv2d)][-1]
    r2 = last.out_channels // 4          # sub-pixel shuffle: channel c reads conv outputs c*r2 .. c*r2+r2-1
    for step, expect_zero in ((0, True), (20_000, False)):
        model.zero_grad()
        compute_loss(model, torch.rand(2, 3, 16, 16), Noise(0), step, Schedule()).total.backward()
        mask_rows = last.weight.grad[3 * r2:]
        assert bool((mask_rows == 0).all()) is expect_zero
        assert last.weight.grad[:3 * r2].abs().sum() > 0


def _run(steps, seed=0):
    torch.manual_seed(seed)
    state = TrainState.create(build_model(micro_model_config()), TrainConfig(batch=2, seed=seed))
    x = torch.rand(4, 3, 16, 16, generator=torch.Generator().manual_seed(1))
    reports = []
    for _ in range(steps):
        state, rep = train_step(x, state)
        reports.append(rep.as_dict())
    return reports


def test_identical_seeds_identical_reports():
    assert _run(11)[10] == _run(11)[10]


def test_overfitting_reduces_loss():
    torch.manual_seed(0)
    state = TrainState.create(build_model(micro_model_config()), TrainConfig(lr=1e-3, mask_force_steps=0))
    x = torch.rand(4, 3, 16, 16, generator=torch.Generator().manual_seed(1))
    first = None
    for _ in range(200):
        state, rep = train_step(x, state)
        first = first if first is not None else -rep.recon.item()
    assert -rep.recon.item() < first


def test_matching_posterior_and_prior_leaves_reconstruction():
    zero = torch.tensor(0.0)
    r = _report(kl_g=zero, kl_b=zero, kl_s=zero, aux_b=zero, aux_o_pres=zero, aux_o_wherewhat=zero, beta_b=50.0)
    assert r.total.item() == 10.0
