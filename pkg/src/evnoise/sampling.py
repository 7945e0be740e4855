"""Seeded sampling primitives shared by the ensemble and synthesis code.

All randomness in the package flows through counter-based Philox generators
keyed by a caller-supplied 64-bit seed, so results are reproducible and
independent of evaluation order.
"""
from __future__ import annotations

import numpy as np

from .errors import DomainError
from .validation import check_nonnegative


def rng_from_seed(seed: int, stream: int = 0) -> np.random.Generator:
    """Deterministic generator for (seed, stream)."""
    return np.random.Generator(np.random.Philox(seed=[int(seed), int(stream)]))


def truncated_normal(rng: np.random.Generator, mean: float, sigma: float,
                     size: int, low: float = 0.0) -> np.ndarray:
    """Normal(mean, sigma^2) truncated to [low, inf) by rejection sampling.

    sigma == 0 returns the constant mean (which must satisfy the bound).
    """
    check_nonnegative("sigma", sigma)
    if sigma == 0.0:
        if mean < low:
            raise DomainError(f"mean {mean!r} below truncation bound {low!r}")
        return np.full(size, float(mean))
    out = rng.normal(mean, sigma, size)
    for _ in range(1000):
        bad = out < low
        if not bad.any():
            return out
        out[bad] = rng.normal(mean, sigma, int(bad.sum()))
    # < 1e-300 chance for any sane (mean, sigma); resample would loop forever
    # only if the acceptance region has ~zero mass
    raise DomainError(
        f"rejection sampling stalled: N({mean}, {sigma}^2) truncated at {low} "
        f"has negligible acceptance mass")
