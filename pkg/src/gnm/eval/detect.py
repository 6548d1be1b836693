"""Reading a rendered scene back into a spec: components, boxes and classes.

All geometry is measured in a 128x128 frame; smaller images are upsampled
first so the pixel thresholds keep their meaning.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import torch
from scipy import ndimage
from skimage.transform import resize

from ..config import EvalConfig
from ..scenegen.arrow import SHAPES, shape_mask
from ..scenegen.mnist import quadrant_of
from ..scenegen.types import DatasetKind, ObjectSpec, SceneSpec
from ..scenegen.validate import validate_scene
from .classifier import PatchCNN, normalize_crop

FRAME = 128
_EIGHT = np.ones((3, 3), bool)


@dataclass
class DetectedObject:
    bbox: tuple                 # xyxy in the 128 px frame
    center: tuple
    cls: object                 # digit int, shape name, or None when unrecognizable
    confidence: float
    color: tuple = (255, 255, 255)
    style: Optional[str] = None
    orientation: Optional[float] = None


@dataclass
class DetectedScene:
    kind: DatasetKind
    objects: list = field(default_factory=list)
    image_size: int = FRAME

    @property
    def recognized(self) -> bool:
        return all(o.cls is not None for o in self.objects)

    def to_spec(self) -> SceneSpec:
        objs = list(self.objects)
        if self.kind is DatasetKind.ARROW2D:
            # pixels carry no paint order, so the arrow is listed last
            objs.sort(key=lambda o: o.cls == "arrow")
            counts = {}
            for o in objs:
                counts[o.cls] = counts.get(o.cls, 0) + 1
        specs = []
        for o in objs:
            if self.kind is DatasetKind.ARROW2D:
                role = "arrow" if o.cls == "arrow" else ("unique_shape" if counts[o.cls] == 1 else "pair_shape")
                quadrant = None
            else:
                role, quadrant = "digit", quadrant_of(*o.center, self.image_size)
            specs.append(ObjectSpec(cls=o.cls, center=o.center, bbox=o.bbox, color=o.color, role=role,
                                    quadrant=quadrant, style=o.style, orientation=o.orientation))
        return SceneSpec(specs, self.kind, self.image_size)


def to_frame(image) -> np.ndarray:
    """Any of (3,H,W) tensor, (H,W,3) uint8/float array -> float (128,128,3) in [0,1]."""
    if torch.is_tensor(image):
        image = image.detach().cpu().float().numpy()
        if image.ndim == 3 and image.shape[0] in (1, 3):
            image = image.transpose(1, 2, 0)
    img = np.asarray(image)
    img = img.astype(np.float64) / 255.0 if img.dtype == np.uint8 else img.astype(np.float64)
    if img.ndim == 2:
        img = img[..., None]
    if img.shape[-1] == 1:
        img = np.repeat(img, 3, -1)
    if img.shape[0] != FRAME:
        img = resize(img, (FRAME, FRAME, 3), order=1, anti_aliasing=img.shape[0] > FRAME)
    return np.clip(img, 0, 1)


def components(gray: np.ndarray, threshold: float, min_area: int):
    """8-connected ink regions as ``(ink_mask, support)`` pairs.

    ``support`` adds a one pixel rim of faint strokes that belongs to no other
    component; crops for the classifier are read through it.
    """
    ink = gray > threshold
    labels, n = ndimage.label(ink, structure=_EIGHT)
    out = []
    for k in range(1, n + 1):
        m = labels == k
        if m.sum() >= min_area:
            out.append((m, ndimage.binary_dilation(m, _EIGHT) & ~(ink & ~m)))
    return out


def _box(mask) -> tuple:
    ys, xs = np.nonzero(mask)
    return float(xs.min()), float(ys.min()), float(xs.max() + 1), float(ys.max() + 1)


def _centroid(weights) -> tuple:
    cy, cx = ndimage.center_of_mass(weights)
    return float(cx + 0.5), float(cy + 0.5)


def _iou(a, b) -> float:
    union = np.logical_or(a, b).sum()
    return float(np.logical_and(a, b).sum() / union) if union else 0.0


def fit_template(mask: np.ndarray, window: int = 24):
    """Best (shape, angle, iou) among rasterized sprite templates centred on the mask centroid."""
    cx, cy = _centroid(mask.astype(float))
    ys, xs = np.nonzero(mask)
    r_est = float(np.hypot(xs + 0.5 - cx, ys + 0.5 - cy).max()) + 0.5
    x0, y0 = int(round(cx)) - window, int(round(cy)) - window
    size = 2 * window
    local = np.zeros((size, size), bool)
    sy, sx = ys - y0, xs - x0
    keep = (sy >= 0) & (sy < size) & (sx >= 0) & (sx < size)
    local[sy[keep], sx[keep]] = True
    lx, ly = cx - x0, cy - y0
    best = (None, None, -1.0)
    for shape in SHAPES:
        for f in (0.9, 0.95, 1.0, 1.05, 1.1):
            s = _iou(local, shape_mask(shape, lx, ly, r_est * f, 0.0, size))
            if s > best[2]:
                best = (shape, None, s)
    # arrow: the long principal axis fixes the orientation up to a flip
    cov = np.cov(np.stack([xs, ys])) if len(xs) > 1 else np.eye(2)
    w, v = np.linalg.eigh(cov)
    axis = math.degrees(math.atan2(v[1, -1], v[0, -1]))
    for base in (axis, axis + 180):
        for d in range(-10, 11, 2):
            for f in (0.95, 1.0, 1.05):
                s = _iou(local, shape_mask("arrow", lx, ly, r_est * f, base + d, size))
                if s > best[2]:
                    best = ("arrow", (base + d + 180) % 360 - 180, s)
    return best


def _style(img, mask) -> str:
    core = ndimage.binary_erosion(mask, _EIGHT)
    vals = img.max(-1)[core if core.sum() >= 4 else mask]
    return "metal" if vals.std() / max(vals.mean(), 1e-6) > 0.025 else "matte"


def detect_and_classify(image, kind, classifier: PatchCNN | None = None, cfg: EvalConfig | None = None
                        ) -> DetectedScene:
    """Binarize, split into components, box and classify each one.

    Digit crops below ``cfg.min_confidence`` and sprite fits below
    ``cfg.template_min_iou`` come back with ``cls=None`` (unrecognizable).
    """
    cfg = cfg or EvalConfig()
    kind = DatasetKind.parse(kind)
    img = to_frame(image)
    gray = img.max(-1)
    comps = components(gray, cfg.binarize, cfg.min_area)
    scene = DetectedScene(kind)
    if kind is DatasetKind.ARROW2D:
        for m, _ in comps:
            shape, angle, score = fit_template(m)
            ok = score >= cfg.template_min_iou
            color = tuple(int(c) for c in np.round(np.median(img[m], 0) * 255))
            scene.objects.append(DetectedObject(_box(m), _centroid(m.astype(float)), shape if ok else None, score,
                                                color, _style(img, m), angle if ok else None))
        return scene
    if classifier is None:
        from .classifier import ClassifierMissing
        raise ClassifierMissing("digit scenes need a patch classifier")
    crops = []
    for m, support in comps:
        crops.append(normalize_crop(np.where(support, gray, 0.0)))
    cls, conf = classifier.predict(np.stack(crops)) if crops else (np.zeros(0, int), np.zeros(0))
    for (m, support), c, p in zip(comps, cls, conf):
        center = _centroid(np.where(support, gray, 0.0))
        scene.objects.append(DetectedObject(_box(m), center, int(c) if p >= cfg.min_confidence else None, float(p)))
    return scene


def scene_passes(image, kind, classifier=None, cfg: EvalConfig | None = None) -> tuple[bool, list]:
    cfg = cfg or EvalConfig()
    det = detect_and_classify(image, kind, classifier, cfg)
    if not det.recognized:
        return False, ["unrecognizable"]
    return validate_scene(det.to_spec(), pos_tol=cfg.pos_tol, angle_tol=cfg.angle_tol)


def structure_accuracy(images, kind, classifier=None, cfg: EvalConfig | None = None, details: list | None = None
                       ) -> float:
    """Fraction of images whose detected scene satisfies the dataset's rules."""
    if len(images) < 1:
        raise ValueError("need at least one image")
    passed = 0
    for img in images:
        ok, v = scene_passes(img, kind, classifier, cfg)
        passed += ok
        if details is not None:
            details.append(v)
    return passed / len(images)
