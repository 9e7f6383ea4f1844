"""Pixel-level refinement: bicubic upsampling, SLIC superpixels, and
multi-scale superpixel averaging.

SLIC here is the classic grid-seeded variant in CIELAB: spacing
s = sqrt(H*W/k), 10 assignment/update iterations restricted to 2s x 2s
windows, distance sqrt(d_lab^2 + (d_xy/s)^2 * m^2), then a connectivity
pass that merges components smaller than s^2/4 into their largest
4-neighbor. The procedure uses no randomness, so labelings are repeatable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from skimage.color import rgb2lab

from .errors import BadK, BadTarget, DimMismatch
from .io import SaliencyMap

DEFAULT_SCALES = (8, 16, 32, 64, 128, 256)
SLIC_ITERATIONS = 10
DEFAULT_COMPACTNESS = 10.0


@dataclass(frozen=True)
class SuperpixelLabeling:
    labels: np.ndarray   # (h, w) int, each label one 4-connected region
    k_actual: int
    scale_k: int


def _catmull_rom_weights(t: np.ndarray) -> np.ndarray:
    """Weights for the 4 taps at offsets -1..2, kernel a = -0.5."""
    def k(s):
        s = np.abs(s)
        near = (1.5 * s - 2.5) * s * s + 1.0
        far = ((-0.5 * s + 2.5) * s - 4.0) * s + 2.0
        return np.where(s <= 1.0, near, np.where(s < 2.0, far, 0.0))

    return np.stack([k(t + 1.0), k(t), k(1.0 - t), k(2.0 - t)], axis=0)


def _resample_axis(values: np.ndarray, target: int) -> np.ndarray:
    """Catmull-Rom resample along axis 0 with half-pixel alignment."""
    src = values.shape[0]
    pos = (np.arange(target) + 0.5) * (src / target) - 0.5
    base = np.floor(pos).astype(np.int64)
    t = pos - base
    weights = _catmull_rom_weights(t)
    out = np.zeros((target,) + values.shape[1:], dtype=np.float64)
    for tap in range(4):
        idx = np.clip(base + tap - 1, 0, src - 1)
        out += weights[tap].reshape((-1,) + (1,) * (values.ndim - 1)) * values[idx]
    return out


def upsample(smap: SaliencyMap, target_h: int, target_w: int) -> SaliencyMap:
    """Bicubic (Catmull-Rom) upsample, clamped back to [0, 1]."""
    if target_h < smap.height or target_w < smap.width:
        raise BadTarget(f"target {(target_h, target_w)} smaller than source "
                        f"{(smap.height, smap.width)}")
    out = _resample_axis(smap.values, target_h)
    out = _resample_axis(out.T, target_w).T
    return SaliencyMap(np.clip(out, 0.0, 1.0))


def slic(image: np.ndarray, k: int,
         compactness: float = DEFAULT_COMPACTNESS) -> SuperpixelLabeling:
    """Segment an RGB (h, w, 3) u8 image into about k superpixels."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise DimMismatch("expected an h x w x 3 RGB image")
    h, w = image.shape[:2]
    if k < 1 or k > h * w:
        raise BadK(f"k={k} outside [1, {h * w}]")
    lab = rgb2lab(image.astype(np.float64) / 255.0)
    s = np.sqrt(h * w / k)
    ys = np.arange(s / 2.0, h, s)
    xs = np.arange(s / 2.0, w, s)
    if ys.size == 0:
        ys = np.array([(h - 1) / 2.0])
    if xs.size == 0:
        xs = np.array([(w - 1) / 2.0])
    centers = np.array([[lab[int(y), int(x), 0], lab[int(y), int(x), 1],
                         lab[int(y), int(x), 2], y, x]
                        for y in ys for x in xs])
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    ratio = (compactness / s) ** 2
    labels = np.zeros((h, w), dtype=np.int64)
    for _ in range(SLIC_ITERATIONS):
        dist = np.full((h, w), np.inf)
        labels.fill(-1)
        for ci, (cl, ca, cb, cy, cx) in enumerate(centers):
            r0, r1 = max(0, int(cy - s)), min(h, int(cy + s) + 1)
            c0, c1 = max(0, int(cx - s)), min(w, int(cx + s) + 1)
            win = lab[r0:r1, c0:c1]
            d_lab = ((win[..., 0] - cl) ** 2 + (win[..., 1] - ca) ** 2
                     + (win[..., 2] - cb) ** 2)
            d_xy = (yy[r0:r1, c0:c1] - cy) ** 2 + (xx[r0:r1, c0:c1] - cx) ** 2
            d = d_lab + d_xy * ratio
            closer = d < dist[r0:r1, c0:c1]
            dist[r0:r1, c0:c1][closer] = d[closer]
            labels[r0:r1, c0:c1][closer] = ci
        if np.any(labels < 0):  # tiny k with sparse windows: fall back to xy-nearest
            miss = labels < 0
            d_all = ((yy[miss, None] - centers[None, :, 3]) ** 2
                     + (xx[miss, None] - centers[None, :, 4]) ** 2)
            labels[miss] = d_all.argmin(axis=1)
        for ci in range(len(centers)):
            mask = labels == ci
            if mask.any():
                centers[ci] = [lab[..., 0][mask].mean(), lab[..., 1][mask].mean(),
                               lab[..., 2][mask].mean(), yy[mask].mean(), xx[mask].mean()]
    labels = _enforce_connectivity(labels, min_size=max(1, int(s * s / 4)))
    return SuperpixelLabeling(labels, int(labels.max()) + 1, k)


_FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


def _enforce_connectivity(labels: np.ndarray, min_size: int) -> np.ndarray:
    """Split labels into 4-connected components and absorb the small ones."""
    comp = np.zeros_like(labels)
    nxt = 0
    for lbl in np.unique(labels):
        part, n = ndimage.label(labels == lbl, structure=_FOUR_CONN)
        comp[part > 0] = part[part > 0] + nxt
        nxt += n
    comp -= 1  # 0-based
    while True:
        sizes = np.bincount(comp.ravel())
        if len(sizes) <= 1:
            break
        small = [c for c in range(len(sizes)) if 0 < sizes[c] < min_size]
        if not small:
            break
        for c in small:
            mask = comp == c
            if not mask.any():  # already absorbed this pass
                continue
            grown = ndimage.binary_dilation(mask, structure=_FOUR_CONN)
            neighbors = np.unique(comp[grown & ~mask])
            if neighbors.size == 0:
                continue
            target = max(neighbors, key=lambda nb: (np.count_nonzero(comp == nb), -nb))
            comp[mask] = target
    # renumber components by raster order of first pixel
    flat = comp.ravel()
    uniq, first = np.unique(flat, return_index=True)
    remap = np.empty(int(uniq.max()) + 1, dtype=np.int64)
    remap[uniq[np.argsort(first)]] = np.arange(uniq.size)
    return remap[flat].reshape(labels.shape)


def average_within(smap: SaliencyMap, labeling: SuperpixelLabeling) -> SaliencyMap:
    """Replace each pixel by the mean saliency of its superpixel."""
    if labeling.labels.shape != smap.values.shape:
        raise DimMismatch("labeling and map dims differ")
    flat_labels = labeling.labels.ravel()
    sums = np.bincount(flat_labels, weights=smap.values.ravel())
    counts = np.bincount(flat_labels)
    means = sums / counts
    return SaliencyMap(means[flat_labels].reshape(smap.values.shape))


def multiscale_average(smap: SaliencyMap, image: np.ndarray,
                       scales=DEFAULT_SCALES) -> SaliencyMap:
    """Mean of superpixel-averaged maps over several segmentation scales."""
    image = np.asarray(image)
    if image.shape[:2] != smap.values.shape:
        raise DimMismatch("image and map must share pixel dims")
    total = np.zeros_like(smap.values)
    for k in scales:
        labeling = slic(image, min(k, image.shape[0] * image.shape[1]))
        total += average_within(smap, labeling).values
    return SaliencyMap(np.clip(total / len(scales), 0.0, 1.0))
