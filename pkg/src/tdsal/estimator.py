"""Top-level estimator tying the training chain together.

``fit`` consumes a dataset manifest, trains one image classifier and one
feature classifier per category, and exposes the result as a ModelBundle.
Per-image prediction methods wrap the inference module.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import featsal, inference
from .errors import DataError, DegenerateData, DimMismatch
from .io import (
    DEFAULT_SEED,
    DatasetManifest,
    FeatureMap,
    load_map,
    load_ppm,
    load_tensor,
)
from .pooling import DEFAULT_LEVELS, layout, pool
from .svm import TrainConfig, solve

class TopDownSaliency(BaseEstimator):
    """Weakly supervised top-down saliency estimator.

    Parameters mirror the training knobs: pyramid ``levels``, SVM
    regularization ``lam`` / ``max_epochs`` / ``tol``, the number of random
    negative cells harvested per negative image, superpixel ``scales``, and
    the RNG ``seed``.
    """

    def __init__(self, levels=DEFAULT_LEVELS, lam: float = 0.01,
                 max_epochs: int = 100, tol: float = 1e-4,
                 neg_per_image: int = featsal.DEFAULT_NEG_PER_IMAGE,
                 scales=inference.refine.DEFAULT_SCALES,
                 superpixel: bool = True, seed: int = DEFAULT_SEED):
        self.levels = levels
        self.lam = lam
        self.max_epochs = max_epochs
        self.tol = tol
        self.neg_per_image = neg_per_image
        self.scales = scales
        self.superpixel = superpixel
        self.seed = seed

    # --- training ---

    def fit(self, manifest: DatasetManifest, categories=None):
        """Train per-category models from a manifest of feature files."""
        categories = tuple(categories) if categories else manifest.categories()
        if not categories:
            raise DegenerateData("no categories declared or present in manifest")
        fmaps = {}
        for e in manifest:
            try:
                fmaps[e.id] = load_tensor(e.features_path)
            except DataError as exc:
                raise type(exc)(f"image {e.id!r}: {exc}") from exc
        pooled = self._pool_all(manifest, fmaps)
        z = np.array([pooled[e.id] for e in manifest])
        cfg = TrainConfig(self.lam, self.max_epochs, self.tol, self.seed)
        cat_models = []
        self.training_objectives_ = {}
        for ci, name in enumerate(categories):
            y = manifest.label_vector(name).astype(np.float64)
            if not (np.any(y > 0) and np.any(y < 0)):
                raise DegenerateData(
                    f"category {name!r} needs positive and negative images")
            image_model, info = solve(z, y, cfg)
            cat = inference.CategoryModel(
                name, image_model, self._fit_feature_model(manifest, fmaps, name,
                                                           image_model, ci, cfg))
            cat_models.append(cat)
            self.training_objectives_[name] = info["objective"]
        depth = next(iter(fmaps.values())).depth
        self.bundle_ = inference.ModelBundle(tuple(self.levels), depth,
                                             tuple(cat_models))
        return self

    def _pool_all(self, manifest, fmaps):
        pooled = {}
        n_slots = None
        for e in manifest:
            fmap = fmaps[e.id]
            lay = layout(fmap.height, fmap.width, self.levels)
            zi = pool(fmap, lay).z
            if n_slots is None:
                n_slots = zi.shape[0]
            elif zi.shape[0] != n_slots:
                raise DimMismatch(
                    f"image {e.id!r}: pooled length {zi.shape[0]} != {n_slots} "
                    "(grid too small for the pyramid?)")
            pooled[e.id] = zi
        return pooled

    def _fit_feature_model(self, manifest, fmaps, category, image_model, ci, cfg):
        """Harvest a feature train set from combined maps and fit the SVM."""
        def entries():
            for e in manifest:
                fmap = fmaps[e.id]
                if category in e.labels:
                    bt, _, chosen, _, h_map = inference.combined_maps(
                        image_model, fmap, image=self._image_of(e),
                        bu_maps=self._bu_maps_of(e), levels=self.levels)
                    yield e.id, fmap, True, h_map, bt, chosen
                else:
                    yield e.id, fmap, False, None, None, None

        rng = np.random.default_rng([int(self.seed), ci])
        train_set = featsal.harvest(entries(), rng, self.neg_per_image)
        return featsal.train_feature_model(train_set, cfg)

    @staticmethod
    def _image_of(entry):
        if entry.image_path is not None and entry.image_path.exists():
            return load_ppm(entry.image_path)
        return None

    @staticmethod
    def _bu_maps_of(entry):
        return [(p.name, load_map(p)) for p in entry.bu_map_paths]

    # --- prediction ---

    def _require_fitted(self) -> inference.ModelBundle:
        bundle = getattr(self, "bundle_", None)
        if bundle is None:
            raise NotFittedError("call fit() or load a bundle first")
        return bundle

    def predict_category_map(self, fmap: FeatureMap, category: str, image=None,
                             bu_maps=None, counters=None):
        return inference.s_categ(self._require_fitted(), category, fmap, image,
                                 bu_maps, self.superpixel, self.scales, counters)

    def predict_independent_map(self, fmap: FeatureMap, image=None, bu_maps=None,
                                counters=None):
        return inference.s_ind(self._require_fitted(), fmap, image, bu_maps,
                               self.superpixel, self.scales, counters)

    def predict_confidence(self, fmap: FeatureMap) -> dict[str, float]:
        return inference.confidence(self._require_fitted(), fmap)

    @classmethod
    def from_bundle(cls, bundle: inference.ModelBundle, **params) -> "TopDownSaliency":
        est = cls(levels=bundle.levels, **params)
        est.bundle_ = bundle
        return est
