"""Input checks shared by the estimator front end."""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import DataError, ShapeError


def check_interactions(X, n_items: Optional[int] = None) -> np.ndarray:
    """Coerce ``X`` to an (n, 2) int64 array of (user, item) indices."""
    arr = check_array(X, dtype=None, ensure_2d=True, ensure_min_samples=1)
    if arr.shape[1] != 2:
        raise ShapeError(f"interactions must have 2 columns (user, item), got {arr.shape[1]}")
    if arr.dtype.kind == "f":
        if not np.all(arr == np.round(arr)):
            raise DataError("user and item indices must be integers")
    elif arr.dtype.kind not in "iu":
        raise DataError(f"interactions must be integer indices, got dtype {arr.dtype}")
    arr = arr.astype(np.int64)
    if (arr < 0).any():
        raise DataError("user and item indices must be non-negative")
    if n_items is not None and arr[:, 1].max() >= n_items:
        raise DataError(f"item index {int(arr[:, 1].max())} out of range for {n_items} items")
    return arr


def check_features(features, n_items: Optional[int] = None) -> np.ndarray:
    arr = check_array(features, dtype=np.float64, ensure_2d=True)
    if n_items is not None and arr.shape[0] != n_items:
        raise ShapeError(f"expected {n_items} feature rows, got {arr.shape[0]}")
    return arr


def check_categories(categories, n_items: int) -> np.ndarray:
    arr = np.asarray(categories)
    if arr.ndim != 1 or arr.shape[0] != n_items:
        raise ShapeError(f"categories must be a vector of length {n_items}")
    if arr.dtype.kind not in "iu" or (arr < 0).any():
        raise DataError("categories must be non-negative integer ids")
    return arr.astype(np.int64)


def check_users(users, n_users: int) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(users))
    if arr.ndim != 1 or arr.dtype.kind not in "iu":
        raise DataError("users must be a 1-d array of integer indices")
    if len(arr) and (arr.min() < 0 or arr.max() >= n_users):
        raise DataError(f"user index out of range for {n_users} users")
    return arr.astype(np.int64)
