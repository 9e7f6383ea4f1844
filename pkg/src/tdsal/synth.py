"""Synthetic planted-object instances for desk-scale verification.

Positive images carry a rectangle of cells drawn from the object
distribution on a background-distribution canvas; negatives are all
background. Ground-truth masks and a family of candidate bottom-up maps
(exact, inverted, uniform, random) are emitted alongside.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bu import DOWNSAMPLE_FACTOR
from .errors import BadSpec
from .io import (
    DEFAULT_SEED,
    FeatureMap,
    SaliencyMap,
    rng_for,
    save_gray,
    save_manifest,
    save_map,
    save_tensor,
)


@dataclass(frozen=True)
class SynthSpec:
    height: int = 16
    width: int = 16
    depth: int = 8
    rect: tuple[int, int, int, int] = (4, 4, 8, 8)  # (row, col, h, w) in cells
    object_mean: np.ndarray | None = None
    background_mean: np.ndarray | None = None
    sigma: float = 0.25
    n_images: int = 20          # per class (positive and negative)
    category: str = "object"
    seed: int = DEFAULT_SEED
    id_prefix: str = ""
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        r, c, rh, rw = self.rect
        if rh < 1 or rw < 1 or r < 0 or c < 0 or r + rh > self.height or c + rw > self.width:
            raise BadSpec(f"rect {self.rect} does not fit a {self.height}x{self.width} grid")
        if self.sigma < 0:
            raise BadSpec("sigma must be >= 0")
        if self.n_images < 1:
            raise BadSpec("need at least one image per class")
        if self.object_mean is None:
            mean = np.zeros(self.depth)
            mean[: self.depth // 2] = 3.0
            object.__setattr__(self, "object_mean", mean)
        if self.background_mean is None:
            mean = np.zeros(self.depth)
            mean[self.depth // 2:] = 3.0
            object.__setattr__(self, "background_mean", mean)


def cell_mask(spec: SynthSpec) -> np.ndarray:
    mask = np.zeros((spec.height, spec.width), dtype=bool)
    r, c, rh, rw = spec.rect
    mask[r:r + rh, c:c + rw] = True
    return mask


def pixel_mask(spec: SynthSpec, factor: int = DOWNSAMPLE_FACTOR) -> np.ndarray:
    return np.kron(cell_mask(spec), np.ones((factor, factor), dtype=bool))


def draw_feature_map(spec: SynthSpec, rng: np.random.Generator,
                     positive: bool) -> FeatureMap:
    data = rng.normal(spec.background_mean, spec.sigma,
                      size=(spec.height, spec.width, spec.depth))
    if positive:
        r, c, rh, rw = spec.rect
        data[r:r + rh, c:c + rw, :] = rng.normal(
            spec.object_mean, spec.sigma, size=(rh, rw, spec.depth))
    return FeatureMap(np.clip(data, 0.0, None))


def generate(spec: SynthSpec, out_dir) -> Path:
    """Write feature files, GT masks, BU candidates and the manifest.

    Returns the manifest path. Extension columns carry the ground truth of
    positive images: ``gt_mask`` (pixel-resolution PGM), ``gt_boxes``
    (``category:x:y:w:h`` in pixels) and ``gt_labels`` (index PGM where the
    planted rect is class 1 — single-category semantics).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = rng_for(spec.seed, 0)
    gt_cells = cell_mask(spec)
    gt_map = SaliencyMap(gt_cells.astype(np.float64))
    prefix = spec.id_prefix or spec.category
    save_map(gt_map, out / f"{prefix}_bu_exact.pgm")
    save_map(SaliencyMap(1.0 - gt_cells.astype(np.float64)), out / f"{prefix}_bu_inverted.pgm")
    save_map(SaliencyMap(np.ones_like(gt_map.values)), out / f"{prefix}_bu_uniform.pgm")
    save_map(SaliencyMap(rng.random(gt_cells.shape)), out / f"{prefix}_bu_random.pgm")
    pixels = pixel_mask(spec)
    save_map(SaliencyMap(pixels.astype(np.float64)), out / f"{prefix}_gt_pixel.pgm")
    save_gray(pixels.astype(np.uint8), out / f"{prefix}_gt_labels_pos.pgm")
    save_gray(np.zeros_like(pixels, dtype=np.uint8), out / f"{prefix}_gt_labels_neg.pgm")
    r, c, rh, rw = spec.rect
    f = DOWNSAMPLE_FACTOR
    box_cell = f"{spec.category}:{c * f}:{r * f}:{rw * f}:{rh * f}"
    bu_cell = ";".join(f"{prefix}_bu_{n}.pgm" for n in ("exact", "inverted", "uniform", "random"))
    rows = []
    for positive in (True, False):
        for i in range(spec.n_images):
            entry_id = f"{prefix}_{'pos' if positive else 'neg'}{i:03d}"
            fname = f"{entry_id}.ften"
            save_tensor(draw_feature_map(spec, rng, positive), out / fname)
            rows.append({
                "id": entry_id,
                "features_path": fname,
                "bu_maps": bu_cell,
                "labels": spec.category if positive else "",
                "gt_mask": f"{prefix}_gt_pixel.pgm" if positive else "",
                "gt_boxes": box_cell if positive else "",
                "gt_labels": f"{prefix}_gt_labels_{'pos' if positive else 'neg'}.pgm",
                **spec.extras,
            })
    manifest_path = out / f"{prefix}_manifest.csv"
    extra_cols = ("gt_mask", "gt_boxes", "gt_labels") + tuple(
        k for k in spec.extras if k not in ("gt_mask", "gt_boxes", "gt_labels"))
    save_manifest(rows, manifest_path, extra_cols=extra_cols)
    return manifest_path


def merge_manifests(paths, out_path) -> Path:
    """Concatenate manifests that share the same header (column set)."""
    out_lines: list[str] = []
    for p in paths:
        lines = Path(p).read_text(encoding="utf-8").splitlines()
        if not out_lines:
            out_lines.append(lines[0])
        elif lines[0] != out_lines[0]:
            raise BadSpec("manifests have different headers")
        out_lines.extend(lines[1:])
    Path(out_path).write_text("\n".join(out_lines) + "\n", encoding="utf-8")
    return Path(out_path)
