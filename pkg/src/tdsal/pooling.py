"""Multi-scale spatial pyramid max-pooling with provenance tracking.

Slots are ordered region-major (levels in declared order, regions row-major
within a level) and channel-minor, so slot ``i`` pools channel ``i % d`` of
region ``i // d``. Each slot records which grid cell won the max, which is
what makes the pooling invertible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, IndexOutOfRange
from .io import FeatureMap

DEFAULT_LEVELS = (1, 2, 4)


@dataclass(frozen=True)
class PyramidLayout:
    """Region geometry of the pyramid over an h×w feature grid."""

    height: int
    width: int
    levels: tuple[int, ...]          # grid sizes actually kept (post clamping)
    requested_levels: tuple[int, ...]
    bounds: tuple                    # per region: (r0, r1, c0, c1), half open
    region_of: np.ndarray            # (n_levels, h, w) global region index per cell

    @property
    def n_regions(self) -> int:
        return len(self.bounds)

    def slots(self, depth: int) -> int:
        return self.n_regions * depth


def layout(h: int, w: int, levels=DEFAULT_LEVELS) -> PyramidLayout:
    """Build the region partition; levels with g > min(h, w) are dropped."""
    if h < 1 or w < 1:
        raise DimMismatch("grid dims must be positive")
    kept = tuple(g for g in levels if g <= min(h, w))
    bounds = []
    region_of = np.zeros((len(kept), h, w), dtype=np.int64)
    offset = 0
    for li, g in enumerate(kept):
        rb = [k * h // g for k in range(g + 1)]
        cb = [k * w // g for k in range(g + 1)]
        for a in range(g):
            for b in range(g):
                bounds.append((rb[a], rb[a + 1], cb[b], cb[b + 1]))
                region_of[li, rb[a]:rb[a + 1], cb[b]:cb[b + 1]] = offset + a * g + b
        offset += g * g
    return PyramidLayout(h, w, kept, tuple(levels), tuple(bounds), region_of)


@dataclass(frozen=True)
class PooledVector:
    """Max-pooled vector plus per-slot provenance.

    ``winner[i]`` is the flat row-major grid index of the feature whose
    channel ``i % d`` attained ``z[i]``, or -1 when the whole region is zero
    in that channel (such slots attribute to no feature).
    """

    z: np.ndarray
    winner: np.ndarray
    depth: int

    def __len__(self) -> int:
        return self.z.shape[0]

    def provenance(self, i: int):
        """(feature index, element index) of slot i, or None for zero slots."""
        if i < 0 or i >= len(self):
            raise IndexOutOfRange(f"slot {i} outside [0, {len(self)})")
        m = int(self.winner[i])
        return None if m < 0 else (m, i % self.depth)


def pool(fmap: FeatureMap, lay: PyramidLayout) -> PooledVector:
    """Per-region, per-channel max with first-in-row-major-order tie break."""
    if (fmap.height, fmap.width) != (lay.height, lay.width):
        raise DimMismatch("layout does not match feature map dims")
    d = fmap.depth
    n = lay.n_regions * d
    z = np.zeros(n, dtype=np.float64)
    winner = np.full(n, -1, dtype=np.int64)
    data = fmap.data
    for ridx, (r0, r1, c0, c1) in enumerate(lay.bounds):
        slab = data[r0:r1, c0:c1, :].reshape(-1, d)
        arg = slab.argmax(axis=0)  # first occurrence = smallest row-major cell
        vals = slab[arg, np.arange(d)]
        rows = r0 + arg // (c1 - c0)
        cols = c0 + arg % (c1 - c0)
        m = rows * lay.width + cols
        z[ridx * d:(ridx + 1) * d] = vals
        winner[ridx * d:(ridx + 1) * d] = np.where(vals > 0.0, m, -1)
    return PooledVector(z, winner, d)


def pool_single(fmap: FeatureMap, m: int, lay: PyramidLayout) -> PooledVector:
    """Pool of the map with every feature except ``m`` replaced by zeros.

    Computed directly from the regions containing ``m``; bit-identical to
    pooling the explicitly zeroed map.
    """
    if m < 0 or m >= fmap.n_features:
        raise IndexOutOfRange(f"feature {m} outside [0, {fmap.n_features})")
    d = fmap.depth
    z = np.zeros(lay.n_regions * d, dtype=np.float64)
    winner = np.full(lay.n_regions * d, -1, dtype=np.int64)
    row, col = divmod(m, lay.width)
    u = fmap.data[row, col, :]
    for li in range(len(lay.levels)):
        ridx = int(lay.region_of[li, row, col])
        z[ridx * d:(ridx + 1) * d] = u
        winner[ridx * d:(ridx + 1) * d] = np.where(u > 0.0, m, -1)
    return PooledVector(z, winner, d)


def inverse(pv: PooledVector, i: int):
    """Provenance of slot ``i``: (feature index, element index) or None."""
    return pv.provenance(i)
