"""Input validation helpers shared by the estimators and functional API."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .exceptions import DataError

SIMPLEX_TOL = 1e-6


def check_finite_matrix(X, name: str = "X", ndim: int = 2) -> np.ndarray:
    """Return ``X`` as a float64 array, rejecting NaN/inf and wrong rank."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != ndim:
        raise DataError(f"invalid data: {name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"invalid data: {name} contains non-finite values")
    return arr


def on_simplex(y: np.ndarray, tol: float = SIMPLEX_TOL, axis: int = 0) -> bool:
    """True if ``y`` (or every slice along ``axis``) is a probability vector."""
    y = np.asarray(y)
    return bool(np.all(y >= -tol) and np.all(np.abs(y.sum(axis=axis) - 1.0) <= tol))


def check_vocalizations(X: Sequence, n_features: int | None = None) -> list[np.ndarray]:
    """Validate a sequence of per-vocalization CSF arrays.

    Each element is ``(n_csfs, n_features)``; elements may have different
    numbers of rows but must share the feature dimension.
    """
    if isinstance(X, np.ndarray) and X.ndim == 2:
        raise DataError("expected a sequence of 2-D arrays (one per vocalization), got a single matrix")
    out = []
    for i, x in enumerate(X):
        arr = check_finite_matrix(x, name=f"vocalization {i}")
        if n_features is None:
            n_features = arr.shape[1]
        elif arr.shape[1] != n_features:
            raise DataError(
                f"dictionary/input mismatch: vocalization {i} has {arr.shape[1]} features, expected {n_features}"
            )
        out.append(arr)
    return out


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0
