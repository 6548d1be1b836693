"""Training objective, curriculum schedules and the optimiser step."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields

import numpy as np
import torch

from .config import ModelConfig, TrainConfig
from .model.dists import Noise, gaussian_log_prob
from .model.gnm import GNM, Trace

log = logging.getLogger(__name__)


class DomainError(ValueError):
    pass


class NonFiniteLoss(FloatingPointError):
    pass


# ---------------------------------------------------------------------------
# KL building blocks


def kl_gaussian(mu_q, sigma_q, mu_p, sigma_p, dim=-1):
    """KL(N(mu_q, sigma_q^2) || N(mu_p, sigma_p^2)) for diagonal Gaussians, summed over ``dim``.

    ``dim=None`` returns the elementwise terms.
    """
    mu_q, sigma_q, mu_p, sigma_p = (torch.as_tensor(t, dtype=torch.get_default_dtype())
                                    if not torch.is_tensor(t) else t for t in (mu_q, sigma_q, mu_p, sigma_p))
    if (sigma_q <= 0).any() or (sigma_p <= 0).any():
        raise DomainError("standard deviations must be positive")
    ratio = (sigma_q / sigma_p) ** 2
    kl = 0.5 * (ratio + ((mu_q - mu_p) / sigma_p) ** 2 - 1 - torch.log(ratio))
    return kl if dim is None else kl.sum(dim)


def kl_bernoulli(p_q, p_p, eps: float = 1e-6, dim=-1):
    p_q, p_p = (torch.as_tensor(t, dtype=torch.get_default_dtype()) if not torch.is_tensor(t) else t
                for t in (p_q, p_p))
    for t in (p_q, p_p):
        if torch.isnan(t).any() or (t < 0).any() or (t > 1).any():
            raise DomainError("Bernoulli probabilities must lie in [0, 1]")
    p_q = p_q.clamp(eps, 1 - eps)
    p_p = p_p.clamp(eps, 1 - eps)
    kl = p_q * (torch.log(p_q) - torch.log(p_p)) + (1 - p_q) * (torch.log1p(-p_q) - torch.log1p(-p_p))
    return kl if dim is None else kl.sum(dim)


def kl_bernoulli_logits(logit_q, logit_p):
    """Elementwise Bernoulli KL from logits (stable near 0 and 1)."""
    lq, lq_ = torch.nn.functional.logsigmoid(logit_q), torch.nn.functional.logsigmoid(-logit_q)
    lp, lp_ = torch.nn.functional.logsigmoid(logit_p), torch.nn.functional.logsigmoid(-logit_p)
    q = torch.sigmoid(logit_q)
    return q * (lq - lp) + (1 - q) * (lq_ - lp_)


# ---------------------------------------------------------------------------
# Schedules


@dataclass
class ScheduleValues:
    beta_g: float
    beta_b: float
    mask_force: bool
    tau: float


@dataclass
class Schedule:
    beta_b_start: float = 50.0
    beta_b_span: int = 50_000
    beta_g_span: int = 100_000
    mask_force_steps: int = 10_000
    mask_value: float = 0.9
    tau_start: float = 2.0
    tau_end: float = 0.5
    tau_span: int = 50_000

    @classmethod
    def from_config(cls, cfg: TrainConfig) -> "Schedule":
        names = {f.name for f in fields(cls)}
        return cls(**{n: getattr(cfg, n) for n in names})

    def beta_b(self, step: int) -> float:
        t = min(step / self.beta_b_span, 1.0)
        return self.beta_b_start + (1.0 - self.beta_b_start) * t

    def beta_g(self, step: int) -> float:
        return min(step / self.beta_g_span, 1.0)

    def mask_force(self, step: int) -> bool:
        return step < self.mask_force_steps

    def tau(self, step: int) -> float:
        t = min(step / self.tau_span, 1.0)
        return self.tau_start + (self.tau_end - self.tau_start) * t

    def at(self, step: int) -> ScheduleValues:
        if step < 0:
            raise ValueError("step must be >= 0")
        return ScheduleValues(self.beta_g(step), self.beta_b(step), self.mask_force(step), self.tau(step))


def schedule_at(step: int, schedule: Schedule | None = None) -> ScheduleValues:
    return (schedule or Schedule()).at(step)


def apply_mask_curriculum(m: torch.Tensor, step: int, schedule: Schedule | None = None) -> torch.Tensor:
    """While mask forcing is on every glimpse mask becomes a constant (0.9 by default)."""
    schedule = schedule or Schedule()
    if schedule.mask_force(step):
        return torch.full_like(m, schedule.mask_value)
    return m


# ---------------------------------------------------------------------------
# Loss


@dataclass
class LossReport:
    recon: torch.Tensor
    kl_g: torch.Tensor
    kl_b: torch.Tensor
    kl_s: torch.Tensor
    aux_b: torch.Tensor
    aux_o_pres: torch.Tensor
    aux_o_wherewhat: torch.Tensor
    beta_g: float = 1.0
    beta_b: float = 1.0
    beta: float = 1.0
    total: torch.Tensor = field(default=None)

    def __post_init__(self):
        if self.total is None:
            self.total = self.combine()

    def combine(self) -> torch.Tensor:
        return (-self.recon + self.beta * (self.beta_g * self.kl_g + self.kl_b + self.kl_s)
                + self.beta_b * self.aux_b + self.aux_o_pres + self.aux_o_wherewhat)

    @property
    def aux_o(self):
        return self.aux_o_pres + self.aux_o_wherewhat

    def as_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = float(v.detach()) if torch.is_tensor(v) else float(v)
        return out

    def log_record(self, step: int, wallclock_ms: float) -> dict:
        d = self.as_dict()
        return {"step": step, "recon": d["recon"], "kl_g": d["kl_g"], "kl_b": d["kl_b"], "kl_s": d["kl_s"],
                "aux_b": d["aux_b"], "aux_o": d["aux_o_pres"] + d["aux_o_wherewhat"], "beta_g": d["beta_g"],
                "beta_b": d["beta_b"], "total": d["total"], "wallclock_ms": wallclock_ms}


def recon_log_likelihood(x, x_tilde, sigma_x: float):
    """Per-image Gaussian log-likelihood with fixed std, summed over pixels."""
    sx = torch.full_like(x_tilde, sigma_x)
    return gaussian_log_prob(x, x_tilde, sx).reshape(x.shape[0], -1).sum(1)


def where_prior(cfg: ModelConfig, like: torch.Tensor):
    scale_raw = math.log(cfg.where_prior_px / (cfg.s_max - cfg.where_prior_px))  # logit(px / s_max)
    mu = like.new_tensor([0.0, 0.0, scale_raw, scale_raw]).expand_as(like)
    return mu, torch.full_like(like, cfg.where_prior_std)


def elbo_terms(x, trace: Trace, cfg: ModelConfig, sched: ScheduleValues) -> LossReport:
    """Assemble every objective term from an inference trace; all terms are batch means in nats."""
    B = x.shape[0]

    def per_image(t):
        return t.reshape(B, -1).sum(1)

    g = trace.glob
    recon = recon_log_likelihood(x, trace.render.x_tilde, cfg.sigma_x)
    kl_g = per_image(kl_gaussian(g.post_mu, g.post_sigma, g.prior_mu, g.prior_sigma, dim=None))
    kl_b = per_image(kl_gaussian(*trace.bg_q, *trace.bg_p, dim=None))
    q, p = trace.q, trace.p
    kl_s = per_image(kl_bernoulli_logits(q.pres_logit, p.pres_logit))
    for name, (mq, sq) in q.gaussians().items():
        kl_s = kl_s + per_image(kl_gaussian(mq, sq, *p.gaussians()[name], dim=None))

    mu_b, s_b = trace.bg_q
    aux_b = per_image(kl_gaussian(mu_b, s_b, torch.zeros_like(mu_b), torch.ones_like(s_b), dim=None))
    rho_logit = torch.full_like(q.pres_logit, math.log(cfg.rho / (1 - cfg.rho)))
    aux_pres = per_image(kl_bernoulli_logits(q.pres_logit, rho_logit))
    aux_ww = per_image(kl_gaussian(q.where_mu, q.where_sigma, *where_prior(cfg, q.where_mu), dim=None))
    # depth is regularised towards N(0, 1) along with what
    for mq, sq in ((q.what_mu, q.what_sigma), (q.depth_mu, q.depth_sigma)):
        aux_ww = aux_ww + per_image(kl_gaussian(mq, sq, torch.zeros_like(mq), torch.ones_like(sq), dim=None))

    rep = LossReport(recon=recon.mean(), kl_g=kl_g.mean(), kl_b=kl_b.mean(), kl_s=kl_s.mean(),
                     aux_b=aux_b.mean(), aux_o_pres=aux_pres.mean(), aux_o_wherewhat=aux_ww.mean(),
                     beta_g=sched.beta_g, beta_b=sched.beta_b, beta=cfg.beta)
    if not torch.isfinite(rep.total):
        raise NonFiniteLoss("objective is not finite")
    return rep


def gnm_loss(model: GNM, x, noise: Noise, step: int, schedule: Schedule) -> LossReport:
    sched = schedule.at(step)
    _, trace = model.reconstruct(x, noise, temperature=sched.tau,
                                 mask_fn=lambda m: apply_mask_curriculum(m, step, schedule))
    return elbo_terms(x, trace, model.cfg, sched)


def compute_loss(model, x, noise: Noise, step: int, schedule: Schedule) -> LossReport:
    if isinstance(model, GNM):
        return gnm_loss(model, x, noise, step, schedule)
    return model.loss(x, noise)


# ---------------------------------------------------------------------------
# Optimisation


def step_seed(seed: int, step: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(step)]).generate_state(1)[0])


@dataclass
class TrainState:
    model: torch.nn.Module
    optimizer: torch.optim.Optimizer
    schedule: Schedule
    step: int = 0
    seed: int = 0
    grad_clip: float = 1.0
    max_skips: int = 10
    skipped: int = 0          # consecutive skipped steps
    events: list = field(default_factory=list)

    @classmethod
    def create(cls, model, train_cfg: TrainConfig) -> "TrainState":
        opt = torch.optim.Adam(model.parameters(), lr=train_cfg.lr)
        return cls(model, opt, Schedule.from_config(train_cfg), seed=train_cfg.seed, grad_clip=train_cfg.grad_clip,
                   max_skips=train_cfg.max_skips)


def train_step(batch: torch.Tensor, state: TrainState, grad_hook=None) -> tuple[TrainState, LossReport]:
    """One optimiser update on ``total``.

    Non-finite losses or gradients skip the update (parameters untouched) and
    are logged; ``max_skips`` consecutive skips raise :class:`NonFiniteLoss`.
    """
    model, opt = state.model, state.optimizer
    model.train()
    opt.zero_grad(set_to_none=True)
    device = next(model.parameters()).device
    noise = Noise(step_seed(state.seed, state.step), device=device)
    batch = batch.to(device)
    finite = True
    try:
        report = compute_loss(model, batch, noise, state.step, state.schedule)
        report.total.backward()
    except NonFiniteLoss:
        finite = False
        report = None
    if grad_hook is not None:
        grad_hook(model)
    if finite:
        grads = [p.grad for p in model.parameters() if p.grad is not None]
        finite = all(torch.isfinite(g).all() for g in grads)
    if finite:
        torch.nn.utils.clip_grad_norm_(model.parameters(), state.grad_clip)
        opt.step()
        state.skipped = 0
    else:
        opt.zero_grad(set_to_none=True)
        state.skipped += 1
        state.events.append({"step": state.step, "event": "skipped-non-finite"})
        log.warning("step %d: non-finite loss or gradient, update skipped", state.step)
        if state.skipped >= state.max_skips:
            raise NonFiniteLoss(f"{state.skipped} consecutive non-finite steps")
    state.step += 1
    return state, report
