"""Attribution of classifier confidence back to feature-grid locations.

Every pooled slot knows which grid cell won it, so the classifier score
decomposes into per-cell contributions. Cells that won at least one slot
and contribute positively form the positive set; each such cell is scored
in isolation (all other cells zeroed) and squashed through a sigmoid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch
from .io import FeatureMap, LinearModel, SaliencyMap
from .pooling import PyramidLayout, pool, pool_single
from .svm import score, sigmoid


@dataclass(frozen=True)
class Attribution:
    """Per-feature attribution arrays, all of length h*w."""

    psi_card: np.ndarray      # slots won by each feature
    p_r: np.ndarray           # representativeness, sums to 1 (or all 0)
    theta: np.ndarray         # signed contribution to the bias-free score
    p_c_given_r: np.ndarray   # sigmoid(theta) gated at theta >= 0
    omega: np.ndarray         # bool: positive contribution and >=1 slot won
    s_t: np.ndarray           # isolated-feature saliency, 0 outside omega


def attribute(fmap: FeatureMap, model: LinearModel, lay: PyramidLayout) -> Attribution:
    """Decompose the classifier score over grid cells and score the positive set."""
    n = lay.slots(fmap.depth)
    if model.dim != n:
        raise DimMismatch(f"model dim {model.dim} != pooled length {n}")
    pv = pool(fmap, lay)
    m_total = fmap.n_features
    valid = pv.winner >= 0
    psi_card = np.bincount(pv.winner[valid], minlength=m_total).astype(np.int64)
    total = psi_card.sum()
    p_r = psi_card / total if total > 0 else np.zeros(m_total)
    theta = np.zeros(m_total)
    np.add.at(theta, pv.winner[valid], model.weights[valid] * pv.z[valid])
    p_c_given_r = np.where(theta >= 0.0, sigmoid(theta), 0.0)
    # strict positivity: zero-contribution features never enter the positive set
    omega = (theta > 0.0) & (psi_card > 0)
    s_t = np.zeros(m_total)
    for m in np.flatnonzero(omega):
        s_t[m] = sigmoid(score(model, pool_single(fmap, int(m), lay).z))
    return Attribution(psi_card, p_r, theta, p_c_given_r, omega, s_t)


def backtrack_map(attr: Attribution, h: int, w: int) -> SaliencyMap:
    """Lay the isolated-feature saliencies out on the feature grid."""
    if attr.s_t.shape[0] != h * w:
        raise DimMismatch(f"attribution over {attr.s_t.shape[0]} features, grid is {h}x{w}")
    return SaliencyMap(attr.s_t.reshape(h, w))
