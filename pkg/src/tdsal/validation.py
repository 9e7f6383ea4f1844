"""Input validation helpers used across the estimator API."""

from __future__ import annotations

import numpy as np

from .errors import DimMismatch


def check_same_shape(a, b, what: str = "maps") -> None:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimMismatch(f"{what} differ in shape: {a.shape} vs {b.shape}")


def check_finite_vector(x, dim: int, name: str = "vector") -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != dim:
        raise DimMismatch(f"{name} has shape {x.shape}, expected ({dim},)")
    if not np.all(np.isfinite(x)):
        raise DimMismatch(f"{name} contains non-finite values")
    return x
