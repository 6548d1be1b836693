"""Frozen single-digit classifier used to read generated scenes."""
from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import torch
from scipy import ndimage
from skimage.transform import resize
from torch import nn

log = logging.getLogger(__name__)
CLASSIFIER_SCHEMA = 1


class ClassifierMissing(FileNotFoundError):
    pass


def normalize_crop(gray: np.ndarray) -> np.ndarray:
    """Scale ink so its longer side is 20 px and centre it by mass in a 28x28 frame."""
    gray = np.asarray(gray, np.float64)
    ys, xs = np.nonzero(gray > 0)
    out = np.zeros((28, 28), np.float64)
    if len(xs) == 0:
        return out.astype(np.float32)
    crop = gray[ys.min():ys.max() + 1, xs.min():xs.max() + 1]
    h, w = crop.shape
    s = 20.0 / max(h, w)
    nh, nw = max(1, int(round(h * s))), max(1, int(round(w * s)))
    small = np.clip(resize(crop, (nh, nw), order=1, anti_aliasing=s < 1, mode="constant"), 0, 1)
    y0, x0 = (28 - nh) // 2, (28 - nw) // 2
    out[y0:y0 + nh, x0:x0 + nw] = small
    cy, cx = ndimage.center_of_mass(out)
    return ndimage.shift(out, (13.5 - cy, 13.5 - cx), order=1, mode="constant").astype(np.float32)


class PatchCNN(nn.Module):
    def __init__(self, n_classes: int = 10):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(1, 32, 3, padding=1), nn.ReLU(), nn.Conv2d(32, 32, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
            nn.Conv2d(32, 64, 3, padding=1), nn.ReLU(), nn.Conv2d(64, 64, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
            nn.Flatten(), nn.Dropout(0.3), nn.Linear(64 * 49, 128), nn.ReLU(), nn.Linear(128, n_classes))

    def forward(self, x):
        return self.net(x)

    @torch.no_grad()
    def predict(self, crops: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Class and softmax confidence for (N, 28, 28) crops in [0, 1]."""
        self.eval()
        if len(crops) == 0:
            return np.zeros(0, np.int64), np.zeros(0)
        p = torch.softmax(self(torch.as_tensor(np.asarray(crops), dtype=torch.float32)[:, None]), 1)
        conf, cls = p.max(1)
        return cls.numpy(), conf.double().numpy()


def _augment(x, g):
    """Small random rotation, scale and shift of a (B, 1, 28, 28) batch."""
    B = x.shape[0]
    ang = (torch.rand(B, generator=g) - 0.5) * 0.4
    sc = 1 + (torch.rand(B, generator=g) - 0.5) * 0.2
    sh = (torch.rand(B, 2, generator=g) - 0.5) * 0.15
    cos, sin = torch.cos(ang) / sc, torch.sin(ang) / sc
    theta = torch.stack([torch.stack([cos, -sin, sh[:, 0]], 1), torch.stack([sin, cos, sh[:, 1]], 1)], 1)
    grid = nn.functional.affine_grid(theta, x.shape, align_corners=False)
    return nn.functional.grid_sample(x, grid, align_corners=False)


def train_patch_classifier(train_images, train_labels, test_images, test_labels, epochs: int = 20,
                           seed: int = 0, batch: int = 128, lr: float = 1e-3):
    """Fit a :class:`PatchCNN` on normalized crops; returns ``(model, test_accuracy)``."""
    torch.manual_seed(seed)
    prep = lambda imgs: np.stack([normalize_crop(im) for im in imgs])  # noqa: E731
    xtr = torch.as_tensor(prep(train_images))[:, None]
    ytr = torch.as_tensor(np.asarray(train_labels), dtype=torch.long)
    xte = prep(test_images)
    model = PatchCNN()
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    g = torch.Generator().manual_seed(seed)
    steps = epochs * -(-len(xtr) // batch)
    sched = torch.optim.lr_scheduler.OneCycleLR(opt, max_lr=lr * 3, total_steps=steps)
    for epoch in range(epochs):
        model.train()
        perm = torch.randperm(len(xtr), generator=g)
        for i in range(0, len(perm), batch):
            idx = perm[i:i + batch]
            loss = nn.functional.cross_entropy(model(_augment(xtr[idx], g)), ytr[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
            sched.step()
        acc = float((model.predict(xte)[0] == np.asarray(test_labels)).mean())
        log.info("epoch %d: test accuracy %.4f", epoch, acc)
    return model, acc


def save_classifier(path, model: PatchCNN, test_accuracy: float):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({"schema": CLASSIFIER_SCHEMA, "state": model.state_dict(), "test_accuracy": test_accuracy}, path)


def load_classifier(path) -> PatchCNN:
    path = Path(path)
    if not path.is_file():
        raise ClassifierMissing(f"patch classifier not found at {path}")
    blob = torch.load(path, map_location="cpu", weights_only=True)
    model = PatchCNN()
    model.load_state_dict(blob["state"])
    model.eval()
    model.test_accuracy = blob.get("test_accuracy")
    return model
