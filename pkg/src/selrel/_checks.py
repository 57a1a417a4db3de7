"""Small input-validation helpers used across modules."""

import numpy as np


def check_array(name: str, x, ndim: int, dtype=np.float64) -> np.ndarray:
    """Coerce ``x`` to an ndarray of the given rank, rejecting non-finite values."""
    arr = np.asarray(x, dtype=dtype)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_vector(name: str, x) -> np.ndarray:
    return check_array(name, x, ndim=1)


def check_matrix(name: str, x) -> np.ndarray:
    return check_array(name, x, ndim=2)


def check_positive(name: str, value: float) -> float:
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value!r}")
    return value


def check_distribution(name: str, p, tol: float = 1e-6) -> np.ndarray:
    """Validate a probability vector: non-negative, sums to 1 within ``tol``."""
    arr = check_vector(name, p)
    if np.any(arr < 0):
        raise ValueError(f"{name} has negative entries")
    total = float(arr.sum())
    if abs(total - 1.0) > tol:
        raise ValueError(f"{name} sums to {total}, not 1 within {tol}")
    return arr


def check_choice(name: str, value: str, options) -> str:
    if value not in options:
        raise ValueError(f"{name} must be one of {sorted(options)}, got {value!r}")
    return value
