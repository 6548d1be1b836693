"""Self-describing training checkpoints."""
from __future__ import annotations

import os
from pathlib import Path

import torch

from .baselines import build_model
from .config import RunConfig
from .objective import TrainState

SCHEMA_VERSION = 1


class CheckpointSchemaMismatch(ValueError):
    pass


def save_checkpoint(path, state: TrainState, cfg: RunConfig) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = {
        "schema_version": SCHEMA_VERSION,
        "step": state.step,
        "seed": state.seed,
        "skipped": state.skipped,
        "events": list(state.events),
        "model": state.model.state_dict(),
        "optimizer": state.optimizer.state_dict(),
        "rng": {"torch": torch.get_rng_state()},
        "config": cfg.to_dict(),
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(blob, tmp)
    os.replace(tmp, path)
    return path


def read_checkpoint(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no checkpoint at {path}")
    blob = torch.load(path, map_location="cpu", weights_only=False)
    version = blob.get("schema_version") if isinstance(blob, dict) else None
    if version != SCHEMA_VERSION:
        raise CheckpointSchemaMismatch(f"checkpoint schema_version {version!r}, this build reads {SCHEMA_VERSION}")
    return blob


def load_model(path, device: str = "cpu"):
    """``(model, config, step)`` in eval mode."""
    blob = read_checkpoint(path)
    cfg = RunConfig.from_dict(blob["config"])
    model = build_model(cfg.model)
    model.load_state_dict(blob["model"])
    return model.to(device).eval(), cfg, blob["step"]


def restore_state(path, device: str = "cpu") -> tuple[TrainState, RunConfig]:
    """Rebuild model, optimiser and counters so training continues exactly where it stopped."""
    blob = read_checkpoint(path)
    cfg = RunConfig.from_dict(blob["config"])
    model = build_model(cfg.model).to(device)
    model.load_state_dict(blob["model"])
    state = TrainState.create(model, cfg.train)
    state.optimizer.load_state_dict(blob["optimizer"])
    state.step, state.seed, state.skipped = blob["step"], blob["seed"], blob["skipped"]
    state.events = list(blob["events"])
    torch.set_rng_state(blob["rng"]["torch"])
    return state, cfg
