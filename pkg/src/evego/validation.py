"""Small input-validation helpers used across the package.

These mirror scikit-learn's check_* style: validate, normalize, and
return the value so call sites stay one-liners.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, GeometryMismatchError, NonFiniteError, ShapeMismatchError


def check_positive(value, name: str):
    if not value > 0:
        raise ConfigError(f"{name} must be positive, got {value!r}")
    return value


def check_non_negative(value, name: str):
    if value < 0:
        raise ConfigError(f"{name} must be non-negative, got {value!r}")
    return value


def check_grid(array, name: str = "array") -> np.ndarray:
    """Validate a 2-D (height, width) grid and return it as an ndarray."""
    arr = np.asarray(array)
    if arr.ndim != 2:
        raise ShapeMismatchError(f"{name} must be 2-D (height, width), got shape {arr.shape}")
    return arr


def check_same_grid_shape(a: np.ndarray, b: np.ndarray, what: str = "grids") -> None:
    if a.shape != b.shape:
        raise GeometryMismatchError(f"{what} differ in shape: {a.shape} vs {b.shape}")


def check_points_3d(array, name: str = "points") -> np.ndarray:
    """Validate an (n, 3) float array of 3-D points."""
    arr = np.asarray(array, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ShapeMismatchError(f"{name} must have shape (n, 3), got {arr.shape}")
    return arr


def check_matching_points(pred, gt, name: str = "points") -> tuple[np.ndarray, np.ndarray]:
    p = check_points_3d(pred, f"predicted {name}")
    g = check_points_3d(gt, f"ground-truth {name}")
    if p.shape != g.shape:
        raise ShapeMismatchError(
            f"predicted and ground-truth {name} differ in shape: {p.shape} vs {g.shape}"
        )
    return p, g


def check_finite(array, name: str = "array") -> np.ndarray:
    arr = np.asarray(array)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} contains NaN or Inf")
    return arr


def check_probabilities(array, name: str = "probabilities") -> np.ndarray:
    arr = np.asarray(array, dtype=np.float64)
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ConfigError(f"{name} must lie in [0, 1]")
    return arr


def ordered_map(func, items, threads: int = 1) -> list:
    """Apply ``func`` to ``items``, optionally on a thread pool.

    Results are always returned in input order, so the output is
    byte-identical for any thread count.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))
