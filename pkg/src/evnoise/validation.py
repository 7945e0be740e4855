"""Small input-validation helpers shared across the package."""
from __future__ import annotations

import numpy as np

from .errors import DomainError


def check_finite(name: str, value: float) -> float:
    value = float(value)
    if not np.isfinite(value):
        raise DomainError(f"{name} must be finite, got {value!r}")
    return value


def check_positive(name: str, value: float) -> float:
    value = check_finite(name, value)
    if value <= 0:
        raise DomainError(f"{name} must be > 0, got {value!r}")
    return value


def check_nonnegative(name: str, value: float) -> float:
    value = check_finite(name, value)
    if value < 0:
        raise DomainError(f"{name} must be >= 0, got {value!r}")
    return value


def check_probability(name: str, value: float) -> float:
    value = check_finite(name, value)
    if not 0.0 <= value <= 1.0:
        raise DomainError(f"{name} must be in [0, 1], got {value!r}")
    return value


def as_float_array(name: str, values, ndim: int | None = 1) -> np.ndarray:
    """Coerce to a float ndarray, rejecting NaN/inf."""
    arr = np.asarray(values, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise DomainError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite values")
    return arr
