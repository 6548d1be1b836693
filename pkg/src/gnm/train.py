"""Training driver: batches, checkpoints, JSONL metrics and sample grids."""
from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import torch

from .baselines import build_model
from .checkpoint import restore_state, save_checkpoint
from .config import RunConfig
from .data import ImageStore
from .objective import TrainState, train_step
from .scenegen.store import load_dataset
from .viz import save_montage

log = logging.getLogger(__name__)


def device_from_env() -> str:
    return os.environ.get("GNM_DEVICE", "cpu")


class Prefetcher:
    """Builds the batches for the next few steps on a worker thread.

    Batch contents depend only on ``(seed, step)``, so prefetching never
    changes what a step sees.
    """

    def __init__(self, store: ImageStore, batch: int, seed: int, depth: int):
        self.store, self.batch, self.seed, self.depth = store, batch, seed, max(depth, 0)
        self.pool = ThreadPoolExecutor(1) if self.depth else None
        self.pending = {}

    def get(self, step: int) -> torch.Tensor:
        if self.pool is None:
            return self.store.batch(self.batch, self.seed, step)
        for s in range(step, step + self.depth + 1):
            if s not in self.pending:
                self.pending[s] = self.pool.submit(self.store.batch, self.batch, self.seed, s)
        return self.pending.pop(step).result()

    def close(self):
        if self.pool is not None:
            self.pool.shutdown(cancel_futures=True)


def run_training(cfg: RunConfig, out_dir, resume=None, store: ImageStore | None = None,
                 steps: int | None = None) -> TrainState:
    """Train until ``steps`` (default ``cfg.train.steps``) optimiser steps have been taken.

    Writes ``metrics.jsonl`` (append-only), ``checkpoints/step_XXXXXXX.pt``
    plus ``checkpoints/last.pt``, and ``samples/step_XXXXXXX.png``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    device = device_from_env()
    if resume is not None:
        state, saved = restore_state(resume, device)
        if saved.model != cfg.model:
            log.warning("resuming with the checkpoint's model config")
        cfg.model = saved.model
    else:
        torch.manual_seed(cfg.train.seed)
        state = TrainState.create(build_model(cfg.model).to(device), cfg.train)
    if store is None:
        store = ImageStore(load_dataset(cfg.data.path), cfg.model.image_size, limit=cfg.data.train_size)
    total = cfg.train.steps if steps is None else steps
    tc = cfg.train
    fetch = Prefetcher(store, tc.batch, tc.seed, tc.prefetch)
    (out / "config.ini").write_text(cfg.dumps())
    try:
        with (out / "metrics.jsonl").open("a") as metrics:
            while state.step < total:
                step = state.step
                x = fetch.get(step)
                t0 = time.perf_counter()
                state, report = train_step(x, state)
                ms = (time.perf_counter() - t0) * 1000
                record = report.log_record(step, ms) if report is not None else {
                    "step": step, "event": "skipped-non-finite", "wallclock_ms": ms}
                metrics.write(json.dumps(record) + "\n")
                metrics.flush()
                if state.step % tc.checkpoint_every == 0 or state.step == total:
                    save_checkpoint(out / "checkpoints" / f"step_{state.step:07d}.pt", state, cfg)
                    save_checkpoint(out / "checkpoints" / "last.pt", state, cfg)
                if state.step % tc.sample_every == 0:
                    state.model.eval()
                    with torch.no_grad():
                        save_montage(out / "samples" / f"step_{state.step:07d}.png",
                                     state.model.generate(16, seed=tc.seed))
                if step % 100 == 0 and report is not None:
                    log.info("step %d total %.2f", step, report.total.item())
    finally:
        fetch.close()
    return state
