"""The evaluation suite behind ``gnm eval``."""
from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from ..config import EvalConfig
from ..model.dists import Noise
from ..model.gnm import GNM
from ..model.render import where_to_bbox
from .ap import average_precision_dataset
from .detect import structure_accuracy
from .dsteps import discriminability, pool_stream, write_trace
from .iwae import log_likelihood_iwae
from .probe import what_probe

log = logging.getLogger(__name__)
METRICS = ("s_acc", "d_steps", "ll", "ap", "probe")


@dataclass
class EvalReport:
    s_acc: Optional[float] = None
    d_steps: Optional[int] = None
    d_cap: int = 20_000
    ll: Optional[float] = None          # mean nats per image
    ap_at_05: Optional[float] = None
    ap_avg: Optional[float] = None
    what_cls_acc: Optional[float] = None
    n_samples: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def validate(self) -> "EvalReport":
        for name in ("s_acc", "ap_at_05", "ap_avg", "what_cls_acc"):
            v = getattr(self, name)
            if v is not None and not 0 <= v <= 1:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.d_steps is not None and not 0 < self.d_steps <= self.d_cap:
            raise ValueError("d_steps must lie in [1, d_cap]")
        return self

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.validate().to_json(), indent=2, sort_keys=True))
        return path


def parse_metrics(text: str) -> list[str]:
    names = [m.strip() for m in text.split(",") if m.strip()]
    if not names:
        raise ValueError("no metrics requested")
    bad = [m for m in names if m not in METRICS]
    if bad:
        raise ValueError(f"unknown metrics {bad}; choose from {METRICS}")
    return names


@torch.no_grad()
def generate_images(model, n: int, seed: int, batch: int = 16) -> torch.Tensor:
    model.eval()
    return torch.cat([model.generate(min(batch, n - i), seed=seed + i) for i in range(0, n, batch)])


@torch.no_grad()
def predicted_boxes(model: GNM, x: torch.Tensor, batch: int = 16):
    """Per image: ``[(xyxy, presence probability), ...]`` over every cell."""
    cfg, out = model.cfg, []
    for i in range(0, len(x), batch):
        _, tr = model.reconstruct(x[i:i + batch], Noise(None), pres_mode="mode")
        boxes = where_to_bbox(tr.q.where_mu, cfg.grid, cfg.image_size, cfg.s_max)
        for b in range(boxes.shape[0]):
            out.append([(boxes[b, n].tolist(), float(tr.q.pres_prob[b, n])) for n in range(boxes.shape[1])])
    return out


def evaluate(model, images: torch.Tensor, specs, kind, metrics, cfg: EvalConfig | None = None,
             classifier=None, out_dir=None, real_pool: torch.Tensor | None = None) -> EvalReport:
    """Run the requested metrics against ``images`` (model resolution) and their specs."""
    cfg = cfg or EvalConfig()
    model.eval()
    report = EvalReport(d_cap=cfg.d_cap, config=dataclasses.asdict(cfg))
    n = min(cfg.n_eval, len(images))
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    if "s_acc" in metrics:
        gen = generate_images(model, cfg.n_generate, cfg.seed)
        report.s_acc = structure_accuracy(list(gen), kind, classifier, cfg)
        report.n_samples["s_acc"] = len(gen)
    if "d_steps" in metrics:
        real = real_pool if real_pool is not None else images
        gen = generate_images(model, min(cfg.gen_pool, max(len(real), 1)), cfg.seed + 1)
        trace = []
        report.d_steps = discriminability(pool_stream(real), pool_stream(gen), cfg.d_cap, cfg.d_batch,
                                          cfg.d_heldout, cfg.d_lr, cfg.d_target, cfg.seed, trace=trace)
        report.n_samples["d_steps"] = len(gen)
        if out_dir is not None:
            write_trace(Path(out_dir) / "d_steps_trace.csv", trace)
    if "ll" in metrics:
        vals = torch.cat([log_likelihood_iwae(images[i:i + 1], model, cfg.iwae_k, cfg.seed + i) for i in range(n)])
        report.ll = float(vals.mean())
        report.n_samples["ll"] = n
        if out_dir is not None:
            np.savetxt(Path(out_dir) / "ll_trace.csv", vals.numpy(), delimiter=",", header="ll_nats", comments="")
    if "ap" in metrics:
        if not isinstance(model, GNM):
            log.warning("ap needs per-object boxes; skipped for %s", type(model).__name__)
        else:
            scale = model.cfg.image_size
            preds = predicted_boxes(model, images[:n])
            gts = [[np.array(o.bbox) * scale / s.image_size for o in s.objects] for s in specs[:n]]
            ap = average_precision_dataset(list(zip(preds, gts)), cfg.ap_thresholds)
            report.ap_at_05, report.ap_avg = ap["ap_at_05"], ap["mean"]
            report.n_samples["ap"] = n
    if "probe" in metrics:
        if not isinstance(model, GNM):
            log.warning("probe needs object latents; skipped for %s", type(model).__name__)
        else:
            report.what_cls_acc = what_probe(model, images[:n], specs[:n], seed=cfg.seed)
            report.n_samples["probe"] = n
    if out_dir is not None:
        report.write(Path(out_dir) / "eval_report.json")
    return report.validate()
