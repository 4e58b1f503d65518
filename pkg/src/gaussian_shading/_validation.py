"""Input checks shared by the functional API and the estimator."""
from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils import check_array

from .exceptions import DimensionMismatchError


def check_bits(bits, length: int | None = None, name: str = "bits") -> np.ndarray:
    """Return ``bits`` as a 1-D uint8 array of zeros and ones."""
    arr = np.asarray(bits)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.dtype == bool:
        arr = arr.astype(np.uint8)
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{name} must contain only 0 and 1")
    arr = arr.astype(np.uint8, copy=False)
    if length is not None and arr.size != length:
        raise DimensionMismatchError(f"{name} has length {arr.size}, expected {length}")
    return arr


def check_latent(latent, n_dims: int | None = None, name: str = "latent") -> np.ndarray:
    arr = np.asarray(latent, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 1:
        raise ValueError(f"{name} must be a non-empty 1-D vector, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains NaN or infinite values")
    if n_dims is not None and arr.size != n_dims:
        raise DimensionMismatchError(f"{name} has {arr.size} dims, expected {n_dims}")
    return arr


def check_latent_batch(X, n_dims: int | None = None) -> np.ndarray:
    """2-D (n_samples, n_dims) float64 array, finite."""
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if n_dims is not None and X.shape[1] != n_dims:
        raise DimensionMismatchError(f"X has {X.shape[1]} features, expected {n_dims}")
    return X


def check_window(window) -> int:
    if not isinstance(window, numbers.Integral) or isinstance(window, bool):
        raise TypeError(f"window must be an integer, got {window!r}")
    if not 1 <= window <= 16:
        raise ValueError(f"window must be in [1, 16], got {window}")
    return int(window)


def check_open_probability(p, name: str = "p") -> float:
    p = float(p)
    if not 0.0 < p < 1.0:
        raise ValueError(f"{name} must lie strictly between 0 and 1, got {p}")
    return p
