"""Feature-level saliency: harvest a training set from combined maps and
score every grid cell with a dedicated linear classifier.

Positive vectors come from cells of positive images where the combined map
exceeds 0.5; negatives come from cells of positive images that the
backtracking left at zero and the bottom-up map kept below 0.5, plus a
fixed number of randomly drawn cells per negative image.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimMismatch, NoPositives
from .io import FeatureMap, LinearModel, SaliencyMap
from .svm import TrainConfig, sigmoid, score, train
from .validation import check_finite_vector

POSITIVE_THRESHOLD = 0.5
DEFAULT_NEG_PER_IMAGE = 50


@dataclass
class FeatureTrainSet:
    positives: list = field(default_factory=list)
    negatives: list = field(default_factory=list)
    pos_sources: list = field(default_factory=list)   # (entry_id, cell index)
    neg_sources: list = field(default_factory=list)
    n_pos_object: int = 0
    n_pos_image_background: int = 0
    n_neg_image: int = 0

    def samples(self):
        return [(v, 1) for v in self.positives] + [(v, -1) for v in self.negatives]


def harvest(entries, rng: np.random.Generator,
            neg_per_image: int = DEFAULT_NEG_PER_IMAGE) -> FeatureTrainSet:
    """Build the per-category feature training set.

    ``entries`` yields (entry_id, FeatureMap, is_positive, combined_map,
    backtracked_map, bu_map); the three maps are at cell resolution and may
    be None for negative images.
    """
    out = FeatureTrainSet()
    for entry_id, fmap, is_positive, h_map, bt_map, bu_map in entries:
        flat = fmap.data.reshape(-1, fmap.depth)
        if is_positive:
            _check_dims(fmap, h_map, bt_map, bu_map)
            keep = h_map.values.ravel() > POSITIVE_THRESHOLD
            for m in np.flatnonzero(keep):
                out.positives.append(flat[m])
                out.pos_sources.append((entry_id, int(m)))
            out.n_pos_object += int(keep.sum())
            neg = (bt_map.values.ravel() == 0.0) & (bu_map.values.ravel() < 0.5)
            for m in np.flatnonzero(neg):
                out.negatives.append(flat[m])
                out.neg_sources.append((entry_id, int(m)))
            out.n_pos_image_background += int(neg.sum())
        else:
            count = min(neg_per_image, flat.shape[0])
            picks = np.sort(rng.choice(flat.shape[0], size=count, replace=False))
            for m in picks:
                out.negatives.append(flat[m])
                out.neg_sources.append((entry_id, int(m)))
            out.n_neg_image += count
    if not out.positives:
        raise NoPositives("no cell exceeded the combined-saliency threshold")
    return out


def _check_dims(fmap, *maps):
    for m in maps:
        if (m.height, m.width) != (fmap.height, fmap.width):
            raise DimMismatch("saliency maps must be at feature-grid resolution")


def train_feature_model(train_set: FeatureTrainSet, cfg: TrainConfig) -> LinearModel:
    return train(train_set.samples(), cfg)


def feature_prob(model: LinearModel, u) -> float:
    """Probability that a single feature vector belongs to the object."""
    u = check_finite_vector(u, model.dim, "feature vector")
    return float(sigmoid(score(model, u)))


def l_map(model: LinearModel, fmap: FeatureMap) -> SaliencyMap:
    """Classifier probability at every grid cell."""
    if model.dim != fmap.depth:
        raise DimMismatch(f"feature model dim {model.dim} != depth {fmap.depth}")
    raw = fmap.data.reshape(-1, fmap.depth) @ model.weights + model.bias
    return SaliencyMap(sigmoid(raw).reshape(fmap.height, fmap.width))
