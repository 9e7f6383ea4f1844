"""Per-image saliency inference and the trained-bundle file format.

A bundle stores, per category, the image-level classifier over pooled
vectors and the feature-level classifier over single cells. Inference
combines the backtracked map with the selected bottom-up map, mixes in
feature saliency, refines to pixel resolution and weights by the
normalized classifier confidence.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import bu as bu_mod
from . import featsal, refine
from .backtrack import attribute, backtrack_map
from .errors import BadMagic, BadVersion, DimMismatch, UnknownCategory
from .io import FeatureMap, LinearModel, SaliencyMap, atomic_write_bytes
from .pooling import DEFAULT_LEVELS, layout, pool
from .svm import score
from .validation import check_same_shape

BUNDLE_MAGIC = b"BSPP"
BUNDLE_VERSION = 1
CONFIDENCE_FLOOR = 0.5
UPSAMPLE_FACTOR = 16


@dataclass(frozen=True)
class CategoryModel:
    name: str
    image_model: LinearModel    # over pooled vectors (dim N)
    feature_model: LinearModel  # over single feature vectors (dim d)


@dataclass(frozen=True)
class ModelBundle:
    levels: tuple[int, ...]
    depth: int
    categories: tuple[CategoryModel, ...]

    def __post_init__(self):
        names = [c.name for c in self.categories]
        if len(set(names)) != len(names) or not names:
            raise DimMismatch("bundle needs >= 1 uniquely named category")
        for c in self.categories:
            if c.image_model.dim != self.n_slots or c.feature_model.dim != self.depth:
                raise DimMismatch(f"category {c.name!r} has inconsistent model dims")

    @property
    def n_slots(self) -> int:
        return sum(g * g for g in self.levels) * self.depth

    def category(self, name: str) -> CategoryModel:
        for c in self.categories:
            if c.name == name:
                return c
        raise UnknownCategory(f"category {name!r} not in bundle")

    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.categories)


def save_bundle(bundle: ModelBundle, path) -> None:
    parts = [BUNDLE_MAGIC, struct.pack("<II", BUNDLE_VERSION, len(bundle.categories))]
    parts.append(struct.pack("<I", len(bundle.levels)))
    parts.append(struct.pack(f"<{len(bundle.levels)}I", *bundle.levels))
    parts.append(struct.pack("<II", bundle.depth, bundle.n_slots))
    for cat in bundle.categories:
        raw = cat.name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(cat.image_model.weights.astype("<f4").tobytes())
        parts.append(struct.pack("<f", cat.image_model.bias))
        parts.append(cat.feature_model.weights.astype("<f4").tobytes())
        parts.append(struct.pack("<f", cat.feature_model.bias))
    atomic_write_bytes(path, b"".join(parts))


def load_bundle(path) -> ModelBundle:
    data = open(path, "rb").read()
    if data[:4] != BUNDLE_MAGIC:
        raise BadMagic(f"{path}: not a model bundle")
    version, n_c = struct.unpack_from("<II", data, 4)
    if version != BUNDLE_VERSION:
        raise BadVersion(f"{path}: unsupported bundle version {version}")
    (n_levels,) = struct.unpack_from("<I", data, 12)
    pos = 16
    levels = struct.unpack_from(f"<{n_levels}I", data, pos)
    pos += 4 * n_levels
    depth, n_slots = struct.unpack_from("<II", data, pos)
    pos += 8
    if n_slots != sum(g * g for g in levels) * depth:
        raise DimMismatch(f"{path}: slot count inconsistent with levels/depth")
    cats = []
    for _ in range(n_c):
        (name_len,) = struct.unpack_from("<I", data, pos)
        pos += 4
        name = data[pos:pos + name_len].decode("utf-8")
        pos += name_len
        w = np.frombuffer(data, dtype="<f4", count=n_slots, offset=pos).astype(np.float64)
        pos += 4 * n_slots
        (bias,) = struct.unpack_from("<f", data, pos)
        pos += 4
        v = np.frombuffer(data, dtype="<f4", count=depth, offset=pos).astype(np.float64)
        pos += 4 * depth
        (b_v,) = struct.unpack_from("<f", data, pos)
        pos += 4
        cats.append(CategoryModel(name, LinearModel(w, bias), LinearModel(v, b_v)))
    return ModelBundle(tuple(levels), depth, tuple(cats))


@dataclass
class OpCounters:
    """Observable pipeline-run counters, keyed by stage name."""

    counts: dict = field(default_factory=dict)

    def bump(self, stage: str) -> None:
        self.counts[stage] = self.counts.get(stage, 0) + 1

    def get(self, stage: str) -> int:
        return self.counts.get(stage, 0)


def s_p(h_map: SaliencyMap, feat_map: SaliencyMap) -> SaliencyMap:
    """Mean of combined and feature saliency."""
    check_same_shape(h_map.values, feat_map.values)
    return SaliencyMap((h_map.values + feat_map.values) / 2.0)


def confidence(bundle: ModelBundle, fmap: FeatureMap) -> dict[str, float]:
    """Max-normalized exponential of per-category classifier scores.

    Values below 0.5 are zeroed; the top-scoring category is exactly 1.
    """
    lay = layout(fmap.height, fmap.width, bundle.levels)
    z = pool(fmap, lay).z
    raw = np.array([score(c.image_model, z) for c in bundle.categories])
    scaled = np.exp(raw - raw.max())
    scaled[scaled < CONFIDENCE_FLOOR] = 0.0
    return {c.name: float(v) for c, v in zip(bundle.categories, scaled)}


def _bu_candidates(fmap: FeatureMap, image, bu_maps) -> bu_mod.BuCandidateSet:
    """File candidates, else built-ins from the image, else a uniform map."""
    named = []
    for name, smap in bu_maps or ():
        named.append((name, bu_mod.to_cell_resolution(smap, fmap.height, fmap.width)))
    if not named and image is not None:
        for method in ("contrast", "boundary"):
            cell = bu_mod.to_cell_resolution(
                bu_mod.builtin_bu(image, method), fmap.height, fmap.width)
            named.append((method, cell))
    if not named:
        named.append(("uniform", SaliencyMap(np.ones((fmap.height, fmap.width)))))
    return bu_mod.BuCandidateSet.build(named)


def combined_maps(image_model: LinearModel, fmap: FeatureMap, image=None,
                  bu_maps=None, levels=DEFAULT_LEVELS):
    """Backtracked, selected-BU and combined maps at cell resolution."""
    lay = layout(fmap.height, fmap.width, levels)
    attr = attribute(fmap, image_model, lay)
    bt = backtrack_map(attr, fmap.height, fmap.width)
    name, chosen, sel = bu_mod.select(
        fmap, _bu_candidates(fmap, image, bu_maps), image_model, lay)
    return bt, name, chosen, sel, bu_mod.combine(bt, chosen)


def s_categ(bundle: ModelBundle, category: str, fmap: FeatureMap, image=None,
            bu_maps=None, superpixel: bool = True,
            scales=refine.DEFAULT_SCALES, counters: OpCounters | None = None,
            conf: dict[str, float] | None = None) -> SaliencyMap:
    """Confidence-weighted category saliency at pixel resolution.

    When the category's normalized confidence is zero the per-category
    pipeline is skipped entirely and a zero map is returned.
    """
    cat = bundle.category(category)
    conf = conf if conf is not None else confidence(bundle, fmap)
    target_h, target_w = _pixel_dims(fmap, image)
    weight = conf[category]
    if weight == 0.0:
        return SaliencyMap(np.zeros((target_h, target_w)))
    if counters is not None:
        counters.bump("category_pipeline")
    bt, _, _, _, h_map = combined_maps(cat.image_model, fmap, image, bu_maps,
                                       bundle.levels)
    feat = featsal.l_map(cat.feature_model, fmap)
    fused = s_p(h_map, feat)
    pix = refine.upsample(fused, target_h, target_w)
    if superpixel and image is not None:
        pix = refine.multiscale_average(pix, image, scales)
    return SaliencyMap(pix.values * weight)


def _pixel_dims(fmap: FeatureMap, image) -> tuple[int, int]:
    if image is not None:
        return np.asarray(image).shape[0], np.asarray(image).shape[1]
    return fmap.height * UPSAMPLE_FACTOR, fmap.width * UPSAMPLE_FACTOR


def rescale_independent(values: np.ndarray) -> np.ndarray:
    """Free-viewing normalization: <0.5 is background, [0.5, 1] maps to [0, 1]."""
    return np.where(values < 0.5, 0.0, (values - 0.5) / 0.5)


def s_ind(bundle: ModelBundle, fmap: FeatureMap, image=None, bu_maps=None,
          superpixel: bool = True, scales=refine.DEFAULT_SCALES,
          counters: OpCounters | None = None) -> SaliencyMap:
    """Category-independent map: pixelwise max over categories, rescaled."""
    conf = confidence(bundle, fmap)
    stacked = None
    for name in bundle.names():
        cmap = s_categ(bundle, name, fmap, image, bu_maps, superpixel, scales,
                       counters, conf)
        stacked = cmap.values if stacked is None else np.maximum(stacked, cmap.values)
    return SaliencyMap(rescale_independent(stacked))
