"""Linear-readout style probe of object appearance latents."""
from __future__ import annotations

import numpy as np
import torch
from sklearn.neural_network import MLPClassifier

from ..model.dists import Noise
from ..model.render import where_to_box


class NoActiveCells(ValueError):
    pass


def probe_accuracy(train_x, train_y, test_x, test_y, seed: int = 0, hidden: int = 256) -> float:
    """Test accuracy of a two-layer MLP (one hidden layer) trained on ``train_x``."""
    clf = MLPClassifier(hidden_layer_sizes=(hidden,), max_iter=500, random_state=seed)
    clf.fit(np.asarray(train_x), np.asarray(train_y))
    return float(clf.score(np.asarray(test_x), np.asarray(test_y)))


@torch.no_grad()
def what_embeddings(model, images: torch.Tensor, specs, batch: int = 16, threshold: float = 0.5):
    """Posterior-mean z^what of active cells, labelled by the nearest ground-truth object.

    ``specs`` are the scene specs at their own resolution; centres are rescaled
    to the model's image size.
    """
    cfg = model.cfg
    feats, labels, owner = [], [], []
    for i in range(0, len(images), batch):
        x = images[i:i + batch]
        _, tr = model.reconstruct(x, Noise(None), pres_mode="mode")
        boxes = where_to_box(tr.q.where_mu, cfg.grid, cfg.image_size, cfg.s_max)
        active = tr.q.pres_prob >= threshold
        for b in range(x.shape[0]):
            spec = specs[i + b]
            scale = cfg.image_size / spec.image_size
            centers = np.array([o.center for o in spec.objects]) * scale
            for n in torch.nonzero(active[b])[:, 0].tolist():
                c = boxes[b, n, :2].numpy()
                j = int(np.argmin(np.hypot(*(centers - c).T)))
                feats.append(tr.q.what_mu[b, n].numpy())
                labels.append(spec.objects[j].cls)
                owner.append(i + b)
    if not feats:
        raise NoActiveCells("no cell has presence >= threshold")
    return np.stack(feats), np.array(labels), np.array(owner)


def what_probe(model, images: torch.Tensor, specs, train_fraction: float = 0.8, seed: int = 0) -> float:
    """Accuracy of a probe trained on the first ``train_fraction`` of the images, tested on the rest."""
    x, y, owner = what_embeddings(model, images, specs)
    cut = int(len(images) * train_fraction)
    tr, te = owner < cut, owner >= cut
    if not tr.any() or not te.any():
        raise NoActiveCells("train or test split has no active cells")
    return probe_accuracy(x[tr], y[tr], x[te], y[te], seed)
