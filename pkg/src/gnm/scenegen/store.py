"""On-disk dataset layout: manifest.json, images/NNNNNN.png, specs/NNNNNN.json."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .types import SceneSpec

SCHEMA_VERSION = 1
REQUIRED_SPEC_KEYS = ("dataset_kind", "image_size", "objects")
REQUIRED_OBJECT_KEYS = ("cls", "quadrant", "center", "bbox", "color", "role")


class DatasetIOError(OSError):
    pass


class SchemaVersionMismatch(ValueError):
    pass


def serialize_dataset(scenes, out_dir, kind: str | None = None, seed: int | None = None, **extra) -> Path:
    out = Path(out_dir)
    try:
        (out / "images").mkdir(parents=True, exist_ok=True)
        (out / "specs").mkdir(parents=True, exist_ok=True)
        for i, (image, spec) in enumerate(scenes):
            Image.fromarray(np.asarray(image, np.uint8), mode="RGB").save(out / "images" / f"{i:06d}.png")
            (out / "specs" / f"{i:06d}.json").write_text(json.dumps(spec.to_json(), sort_keys=True))
            if kind is None:
                kind = spec.dataset_kind.value
        manifest = {"kind": kind, "count": len(scenes), "seed": seed, "schema_version": SCHEMA_VERSION, **extra}
        (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1))
    except OSError as exc:
        raise DatasetIOError(str(exc)) from exc
    return out


def _check_spec(d: dict, where) -> None:
    missing = [k for k in REQUIRED_SPEC_KEYS if k not in d]
    missing += [f"objects[{i}].{k}" for i, o in enumerate(d.get("objects", [])) for k in REQUIRED_OBJECT_KEYS
                if k not in o]
    if missing:
        raise SchemaVersionMismatch(f"{where}: missing keys {missing}")


class SceneDataset:
    """Lazily loaded dataset directory; indexing yields ``(uint8 image, SceneSpec)``."""

    def __init__(self, root):
        self.root = Path(root)
        try:
            self.manifest = json.loads((self.root / "manifest.json").read_text())
        except OSError as exc:
            raise DatasetIOError(str(exc)) from exc
        version = self.manifest.get("schema_version")
        if version != SCHEMA_VERSION:
            raise SchemaVersionMismatch(f"manifest schema_version {version}, expected {SCHEMA_VERSION}")
        self.kind = self.manifest["kind"]

    def __len__(self):
        return int(self.manifest["count"])

    def image(self, i: int) -> np.ndarray:
        try:
            with Image.open(self.root / "images" / f"{i:06d}.png") as im:
                return np.asarray(im.convert("RGB"))
        except OSError as exc:
            raise DatasetIOError(str(exc)) from exc

    def spec(self, i: int) -> SceneSpec:
        path = self.root / "specs" / f"{i:06d}.json"
        try:
            d = json.loads(path.read_text())
        except OSError as exc:
            raise DatasetIOError(str(exc)) from exc
        _check_spec(d, path)
        return SceneSpec.from_json(d)

    def __getitem__(self, i: int):
        if not 0 <= i < len(self):
            raise IndexError(i)
        return self.image(i), self.spec(i)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def images(self, indices=None) -> np.ndarray:
        idx = range(len(self)) if indices is None else indices
        return np.stack([self.image(i) for i in idx]) if len(idx) else np.zeros((0, 0, 0, 3), np.uint8)


def load_dataset(root) -> SceneDataset:
    return SceneDataset(root)
