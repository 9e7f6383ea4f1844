"""Application adapters: semantic labeling, object segmentation,
localization and detection boxes derived from saliency maps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DimMismatch
from .io import SaliencyMap

BACKGROUND_LEVEL = 0.5
SEGMENT_THRESHOLD = 0.5
LOCALIZE_WINDOW = 64

_FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


@dataclass(frozen=True)
class DetectionBox:
    category: str
    x: int
    y: int
    w: int
    h: int
    score: float  # mean saliency inside the component


def semantic_labels(category_maps) -> np.ndarray:
    """Per-pixel argmax over a uniform 0.5 background and the category maps.

    Returns indices with 0 = background and 1..n in map order; ties go to
    the background first, then to the lowest category index.
    """
    maps = [m.values for m in category_maps]
    if not maps:
        raise DimMismatch("need at least one category map")
    if len({m.shape for m in maps}) != 1:
        raise DimMismatch("category maps disagree on dims")
    stacked = np.stack([np.full_like(maps[0], BACKGROUND_LEVEL)] + maps)
    return stacked.argmax(axis=0)


def segment_object(s_categ: SaliencyMap) -> np.ndarray:
    """Binary object mask at the fixed 0.5 threshold."""
    return s_categ.values >= SEGMENT_THRESHOLD


def box_filter(values: np.ndarray, size: int = LOCALIZE_WINDOW) -> np.ndarray:
    """Zero-padded mean filter with a constant size*size divisor.

    The window for output (y, x) spans rows y-size//2 .. y+size//2-1.
    """
    h, w = values.shape
    half = size // 2
    padded = np.zeros((h + size, w + size))
    padded[half:half + h, half:half + w] = values
    cs = padded.cumsum(axis=0).cumsum(axis=1)
    cs = np.pad(cs, ((1, 0), (1, 0)))
    out = (cs[size:size + h, size:size + w] - cs[:h, size:size + w]
           - cs[size:size + h, :w] + cs[:h, :w])
    return out / float(size * size)


def localize(s_pre: SaliencyMap) -> tuple[int, int]:
    """(x, y) of the peak of the 64x64-averaged map; ties pick the smallest
    row-major position."""
    smoothed = box_filter(s_pre.values)
    flat = int(smoothed.argmax())
    y, x = divmod(flat, smoothed.shape[1])
    return x, y


def detect(s_categ: SaliencyMap, category: str) -> list[DetectionBox]:
    """Boxes around the 4-connected components of the 0.5-binarized map,
    sorted by mean component saliency, descending."""
    mask = s_categ.values >= SEGMENT_THRESHOLD
    labels, n = ndimage.label(mask, structure=_FOUR_CONN)
    boxes = []
    for comp in range(1, n + 1):
        ys, xs = np.nonzero(labels == comp)
        boxes.append(DetectionBox(
            category=category,
            x=int(xs.min()), y=int(ys.min()),
            w=int(xs.max() - xs.min() + 1), h=int(ys.max() - ys.min() + 1),
            score=float(s_categ.values[ys, xs].mean()),
        ))
    boxes.sort(key=lambda b: -b.score)
    return boxes
