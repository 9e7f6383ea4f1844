"""Bottom-up candidate maps and classifier-driven map selection.

Candidate maps are scored by pooling the features reweighted by the map
(and by its inversion) and comparing the two classifier responses; a mean
penalty rejects maps that mark everything salient. The winning map is
multiplied into the backtracked saliency to form the combined map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, EmptyCandidates, EmptyImage
from .io import FeatureMap, LinearModel, SaliencyMap
from .pooling import PyramidLayout, pool, PooledVector
from .svm import score
from .validation import check_same_shape

DOWNSAMPLE_FACTOR = 16


@dataclass(frozen=True)
class BuCandidateSet:
    """Named candidate maps at feature-grid resolution.

    With two or more inputs a derived "max" candidate (pixelwise maximum
    over all inputs) is appended.
    """

    maps: tuple

    @staticmethod
    def build(named_maps) -> "BuCandidateSet":
        items = list(named_maps)
        if not items:
            raise EmptyCandidates("need at least one bottom-up map")
        dims = {(m.height, m.width) for _, m in items}
        if len(dims) != 1:
            raise DimMismatch(f"candidate maps disagree on dims: {dims}")
        if len(items) >= 2:
            stacked = np.stack([m.values for _, m in items])
            items.append(("max", SaliencyMap(stacked.max(axis=0))))
        return BuCandidateSet(tuple(items))

    def __iter__(self):
        return iter(self.maps)

    def __len__(self) -> int:
        return len(self.maps)


@dataclass(frozen=True)
class SelectionScore:
    b_hat: float     # classifier response on saliency-weighted features
    b_tilde: float   # response on inverted-saliency-weighted features
    mean_mu: float   # mean saliency of the candidate
    objective: float  # (b_hat - b_tilde) * (1 - mean_mu)


def builtin_bu(image: np.ndarray, method: str) -> SaliencyMap:
    """Simple stand-in bottom-up maps from an RGB image, at cell resolution.

    ``contrast``: distance of the quantized pixel color to the image mean;
    ``boundary``: distance to the mean border color. Both are max-normalized
    and block-mean downsampled by a factor of 16.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.size == 0:
        raise EmptyImage("expected a non-empty h x w x 3 image")
    if method == "contrast":
        quant = np.floor(image / 16.0) * 16.0
        ref = quant.reshape(-1, 3).mean(axis=0)
        dist = np.sqrt(((quant - ref) ** 2).sum(axis=2))
    elif method == "boundary":
        border = np.concatenate([
            image[0].reshape(-1, 3), image[-1].reshape(-1, 3),
            image[:, 0].reshape(-1, 3), image[:, -1].reshape(-1, 3),
        ])
        ref = border.mean(axis=0)
        dist = np.sqrt(((image - ref) ** 2).sum(axis=2))
    else:
        raise DimMismatch(f"unknown builtin method {method!r}")
    peak = dist.max()
    if peak > 0:
        dist = dist / peak
    return SaliencyMap(block_mean(dist, DOWNSAMPLE_FACTOR))


def block_mean(values: np.ndarray, factor: int) -> np.ndarray:
    """Mean over factor x factor blocks; trailing partial blocks average short."""
    h, w = values.shape
    oh, ow = -(-h // factor), -(-w // factor)
    out = np.empty((oh, ow), dtype=np.float64)
    for i in range(oh):
        for j in range(ow):
            out[i, j] = values[i * factor:(i + 1) * factor,
                               j * factor:(j + 1) * factor].mean()
    return out


def to_cell_resolution(smap: SaliencyMap, cell_h: int, cell_w: int) -> SaliencyMap:
    """Adapt a map to the feature grid: block-mean by 16 when larger, then crop."""
    vals = smap.values
    if vals.shape == (cell_h, cell_w):
        return smap
    if vals.shape[0] > cell_h or vals.shape[1] > cell_w:
        vals = block_mean(vals, DOWNSAMPLE_FACTOR)
    if vals.shape[0] < cell_h or vals.shape[1] < cell_w:
        raise DimMismatch(
            f"bottom-up map {smap.values.shape} too small for grid {(cell_h, cell_w)}")
    return SaliencyMap(vals[:cell_h, :cell_w])


def weighted_pool(fmap: FeatureMap, rho: SaliencyMap, lay: PyramidLayout) -> PooledVector:
    """Pool the features after scaling each cell's vector by the map value."""
    if (rho.height, rho.width) != (fmap.height, fmap.width):
        raise DimMismatch("saliency map dims must match the feature grid")
    scaled = fmap.data * rho.values[:, :, None]
    return pool(FeatureMap(scaled), lay)


def invert_map(rho: SaliencyMap) -> SaliencyMap:
    """Subtract every value from the map's maximum."""
    return SaliencyMap(rho.values.max() - rho.values)


def selection_objective(fmap: FeatureMap, rho: SaliencyMap, model: LinearModel,
                        lay: PyramidLayout) -> SelectionScore:
    """Score one candidate: response difference times the (1 - mean) penalty."""
    b_hat = score(model, weighted_pool(fmap, rho, lay).z)
    b_tilde = score(model, weighted_pool(fmap, invert_map(rho), lay).z)
    mean_mu = float(rho.values.mean())
    return SelectionScore(b_hat, b_tilde, mean_mu, (b_hat - b_tilde) * (1.0 - mean_mu))


def select(fmap: FeatureMap, candidates: BuCandidateSet, model: LinearModel,
           lay: PyramidLayout) -> tuple[str, SaliencyMap, SelectionScore]:
    """Pick the candidate maximizing the objective; ties keep list order."""
    if len(candidates) == 0:
        raise EmptyCandidates("no candidates to select from")
    best = None
    for name, rho in candidates:
        sel = selection_objective(fmap, rho, model, lay)
        if best is None or sel.objective > best[2].objective:
            best = (name, rho, sel)
    return best


def combine(backtracked: SaliencyMap, bu: SaliencyMap) -> SaliencyMap:
    """Elementwise product of the backtracked and bottom-up maps."""
    check_same_shape(backtracked.values, bu.values)
    return SaliencyMap(backtracked.values * bu.values)
