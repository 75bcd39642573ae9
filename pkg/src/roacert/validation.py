"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, NumericError


def check_states(x, dimension: int, *, name: str = "x") -> tuple[np.ndarray, bool]:
    """Coerce ``x`` to a float array of shape ``(batch, dimension)``.

    Returns the 2-D array and whether the caller passed a single state, so
    results can be squeezed back to the caller's shape.
    """
    arr = np.asarray(x, dtype=float)
    single = arr.ndim <= 1
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise DimensionError(f"{name} must be 1-D or 2-D, got shape {arr.shape}")
    if arr.shape[1] != dimension:
        raise DimensionError(f"{name} has {arr.shape[1]} coordinates, expected {dimension}")
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains non-finite entries")
    return arr, single


def check_finite(values: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise NumericError(f"{what} produced non-finite values")
    return values


def check_square(matrix, *, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(matrix, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains non-finite entries")
    return arr


def check_sample(values, *, name: str = "values") -> np.ndarray:
    """1-D finite float sample."""
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains non-finite entries")
    return arr
