"""Run configuration: typed dataclass sections read from an INI-style file.

Every key is validated before any compute starts; unknown keys and
out-of-range values raise :class:`ConfigError` naming the offending key.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, fields
from typing import get_origin, get_type_hints

MODEL_KINDS = ("GNM_STRUCT", "GNM_GAUSSIAN", "GNM_NOMLP", "CONVDRAW", "CONVDRAW_MLP", "VAE")


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    kind: str = "GNM_STRUCT"
    image_size: int = 128
    grid: int = 4
    feat_dim: int = 128
    draw_steps: int = 4
    d_g: int = 32
    d_what: int = 64
    d_depth: int = 1
    d_bg: int = 10
    glimpse_size: int = 64
    s_max: float = 72.0
    eps: float = 1e-5
    sigma_x: float = 0.15
    rho: float = 0.01
    where_prior_px: float = 24.0
    where_prior_std: float = 1.0
    beta: float = 1.0
    interaction: str = "mlp"
    encoder_channels: tuple = (16, 32, 64, 128)
    interaction_hidden: tuple = (512, 512)
    zg_decoder_hidden: tuple = (512, 1024)
    bg_post_hidden: tuple = (512, 256)
    bg_prior_hidden: tuple = (128, 64)
    struct_hidden: tuple = (128, 128)
    glimpse_channels: tuple = (128, 64, 32, 16, 8)
    bg_channels: tuple = (128, 64, 32, 16, 8)
    # baselines
    convdraw_latent_channels: int = 32
    convdraw_interaction: tuple = (128,)
    vae_latent: int = 128
    vae_head: tuple = (128,)

    @property
    def n_cells(self) -> int:
        return self.grid * self.grid

    @property
    def struct_channels(self) -> int:
        return 1 + 2 * (4 + self.d_depth + self.d_what)

    def validate(self):
        _check(self.kind in MODEL_KINDS, "model.kind", f"must be one of {MODEL_KINDS}")
        _check(self.interaction in ("mlp", "none", "conv"), "model.interaction", "must be mlp|none|conv")
        for name in ("image_size", "grid", "feat_dim", "draw_steps", "d_g", "d_what", "d_depth", "d_bg",
                     "glimpse_size", "vae_latent", "convdraw_latent_channels"):
            _check(getattr(self, name) >= 1, f"model.{name}", "must be >= 1")
        _check(_pow2(self.image_size // self.grid) and self.image_size % self.grid == 0, "model.image_size",
               "image_size / grid must be a power of two")
        _check(_pow2(self.glimpse_size) and self.glimpse_size >= 2, "model.glimpse_size", "must be a power of two")
        for name in ("s_max", "eps", "sigma_x", "where_prior_px", "where_prior_std", "beta"):
            _check(getattr(self, name) > 0, f"model.{name}", "must be > 0")
        _check(0 < self.rho < 1, "model.rho", "must lie in (0, 1)")
        _check(self.where_prior_px < self.s_max, "model.where_prior_px", "must be below s_max")
        if self.kind == "GNM_NOMLP":
            _check(self.d_g % self.n_cells == 0, "model.d_g", "must be divisible by grid**2 for GNM_NOMLP")
        return self


@dataclass
class TrainConfig:
    lr: float = 1e-4
    batch: int = 32
    steps: int = 250_000
    seed: int = 0
    grad_clip: float = 1.0
    beta_b_start: float = 50.0
    beta_b_span: int = 50_000
    beta_g_span: int = 100_000
    mask_force_steps: int = 10_000
    mask_value: float = 0.9
    tau_start: float = 2.0
    tau_end: float = 0.5
    tau_span: int = 50_000
    checkpoint_every: int = 5_000
    sample_every: int = 10_000
    max_skips: int = 10
    prefetch: int = 4

    def validate(self):
        _check(self.lr > 0, "train.lr", "must be > 0")
        for name in ("batch", "beta_b_span", "beta_g_span", "tau_span", "checkpoint_every", "sample_every",
                     "max_skips", "prefetch"):
            _check(getattr(self, name) >= 1, f"train.{name}", "must be >= 1")
        _check(self.steps >= 0 and self.mask_force_steps >= 0, "train.steps", "must be >= 0")
        _check(self.beta_b_start >= 1, "train.beta_b_start", "must be >= 1")
        _check(0 < self.mask_value <= 1, "train.mask_value", "must lie in (0, 1]")
        _check(self.tau_start >= self.tau_end > 0, "train.tau_end", "need tau_start >= tau_end > 0")
        _check(self.grad_clip > 0, "train.grad_clip", "must be > 0")
        return self


@dataclass
class DataConfig:
    kind: str = "MNIST4"
    path: str = "data/mnist4"
    train_size: int = 60_000
    test_size: int = 10_000
    mnist_images: str = ""
    mnist_labels: str = ""

    def validate(self):
        _check(self.kind.upper().replace("-", "_") in ("MNIST4", "MNIST10", "MNIST4_10", "ARROW2D"),
               "data.kind", "unknown dataset kind")
        _check(self.train_size >= 1 and self.test_size >= 1, "data.train_size", "must be >= 1")
        return self


@dataclass
class EvalConfig:
    iwae_k: int = 100
    d_cap: int = 20_000
    d_batch: int = 64
    d_heldout: int = 256
    d_lr: float = 1e-3
    d_target: float = 0.9
    n_generate: int = 250
    gen_pool: int = 2048
    binarize: float = 0.2
    min_area: int = 30
    min_confidence: float = 0.9
    pos_tol: float = 8.0
    angle_tol: float = 10.0
    template_min_iou: float = 0.7
    n_eval: int = 200
    ap_thresholds: tuple = (0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95)
    classifier: str = "artifacts/patch_classifier.pt"
    seed: int = 0

    def validate(self):
        _check(self.iwae_k >= 1, "eval.iwae_k", "must be >= 1")
        _check(self.d_cap >= 1 and self.d_batch >= 2 and self.d_heldout >= 2, "eval.d_cap", "must be positive")
        _check(0 < self.d_target <= 1, "eval.d_target", "must lie in (0, 1]")
        _check(0 < self.binarize < 1, "eval.binarize", "must lie in (0, 1)")
        _check(0 <= self.min_confidence <= 1, "eval.min_confidence", "must lie in [0, 1]")
        _check(0 <= self.template_min_iou <= 1, "eval.template_min_iou", "must lie in [0, 1]")
        _check(self.n_eval >= 1 and self.n_generate >= 1, "eval.n_eval", "must be >= 1")
        _check(all(0 < t <= 1 for t in self.ap_thresholds), "eval.ap_thresholds", "must lie in (0, 1]")
        return self


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def validate(self) -> "RunConfig":
        for f in fields(self):
            getattr(self, f.name).validate()
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        cfg = cls()
        for section, values in d.items():
            if section not in {f.name for f in fields(cls)}:
                raise ConfigError(f"unknown config section [{section}]")
            _apply(getattr(cfg, section), section, values, coerce=False)
        return cfg.validate()

    def dumps(self) -> str:
        lines = []
        for f in fields(self):
            lines.append(f"[{f.name}]")
            for k, v in dataclasses.asdict(getattr(self, f.name)).items():
                lines.append(f"{k} = {_fmt(v)}")
            lines.append("")
        return "\n".join(lines)


def _pow2(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


def _check(cond: bool, key: str, msg: str):
    if not cond:
        raise ConfigError(f"{key}: {msg}")


def _fmt(v) -> str:
    if isinstance(v, (tuple, list)):
        return ", ".join(str(x) for x in v)
    return str(v)


def _parse(raw: str, typ, key: str):
    try:
        if typ is bool:
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if typ is int:
            return int(raw.replace("_", ""))
        if typ is float:
            return float(raw)
        if typ is tuple or get_origin(typ) is tuple:
            parts = [p.strip() for p in raw.split(",") if p.strip()]
            return tuple(float(p) if any(c in p for c in ".e") else int(p) for p in parts)
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {getattr(typ, '__name__', typ)}") from exc


def _apply(section_obj, section: str, values: dict, coerce: bool):
    hints = get_type_hints(type(section_obj))
    for key, raw in values.items():
        if key not in hints:
            raise ConfigError(f"unknown config key {section}.{key}")
        typ = hints[key]
        if coerce:
            val = _parse(raw, typ, f"{section}.{key}")
        else:
            val = tuple(raw) if isinstance(raw, list) else raw
            if typ is float and isinstance(val, int):
                val = float(val)
            if typ in (int, float, str) and not isinstance(val, typ):
                raise ConfigError(f"{section}.{key}: expected {typ.__name__}, got {type(val).__name__}")
        setattr(section_obj, key, val)


def load_config(path=None, text: str | None = None) -> RunConfig:
    """Read an INI file (or text) over the defaults and validate it."""
    cfg = RunConfig()
    if path is None and text is None:
        return cfg.validate()
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    if text is not None:
        parser.read_string(text)
    else:
        with open(path) as fh:
            parser.read_file(fh)
    known = {f.name for f in fields(RunConfig)}
    for section in parser.sections():
        if section not in known:
            raise ConfigError(f"unknown config section [{section}]")
        _apply(getattr(cfg, section), section, dict(parser.items(section)), coerce=True)
    return cfg.validate()


def micro_model_config(**overrides) -> ModelConfig:
    """16x16 images, 2x2 grid, two draw steps: small enough for finite differences."""
    base = dict(image_size=16, grid=2, feat_dim=8, draw_steps=2, d_g=4, d_what=4, d_bg=3, glimpse_size=8,
                s_max=12.0, where_prior_px=4.0, encoder_channels=(4, 8), interaction_hidden=(16,),
                zg_decoder_hidden=(16,), bg_post_hidden=(16,), bg_prior_hidden=(8,), struct_hidden=(8,),
                glimpse_channels=(8, 8), bg_channels=(8, 8, 4, 4, 4), convdraw_latent_channels=2,
                convdraw_interaction=(8,), vae_latent=8, vae_head=(8,))
    base.update(overrides)
    return ModelConfig(**base).validate()


__all__ = ["ConfigError", "DataConfig", "EvalConfig", "ModelConfig", "RunConfig", "TrainConfig",
           "load_config", "micro_model_config"]
