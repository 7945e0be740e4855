"""Step-response (S-curve) families and the bias-setting utility maps.

An S-curve is the event probability versus log contrast ln(I/I0) for an ideal
step stimulus at a fixed baseline intensity. Families are averaged over a
seeded ensemble of per-pixel thresholds drawn from a truncated normal, which
is how the sensor's pixel-to-pixel threshold spread enters the curves.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import model
from .errors import DomainError
from .params import Method, ModelParams, Polarity
from .sampling import rng_from_seed, truncated_normal
from .validation import as_float_array, check_nonnegative

DEFAULT_CONTRAST_GRID = tuple(np.linspace(0.0, 1.0, 60))
DEFAULT_N_PIXELS = 1000


@dataclass(frozen=True)
class SCurveRequest:
    """Grid and ensemble settings for one S-curve family.

    Contrast sign selects polarity per grid point: c >= 0 evaluates the
    positive-event probability, c < 0 the negative one.
    """

    baseline_lux: tuple
    contrast_grid: tuple = DEFAULT_CONTRAST_GRID
    n_pixels: int = DEFAULT_N_PIXELS
    seed: int = 0
    sigma_b: float = 0.0045
    method: Method = Method.SADDLE
    apply_floor: bool = True

    def __post_init__(self):
        if self.n_pixels < 1:
            raise DomainError("n_pixels must be >= 1")
        check_nonnegative("sigma_b", self.sigma_b)
        as_float_array("baseline_lux", np.asarray(self.baseline_lux, float))
        as_float_array("contrast_grid", np.asarray(self.contrast_grid, float))
        if np.any(np.asarray(self.baseline_lux, float) < 0):
            raise DomainError("baseline_lux must be >= 0")


@dataclass
class SCurveFamily:
    """Ensemble-mean probabilities on a |baselines| x |contrasts| grid.

    NaN entries mark grid points the chosen method could not evaluate
    (degenerate saddle); they are emitted as empty CSV fields.
    """

    baseline_lux: np.ndarray
    contrast: np.ndarray
    prob_mean: np.ndarray
    prob_std: np.ndarray
    request: SCurveRequest = field(repr=False, default=None)

    def to_csv(self, path) -> None:
        lines = ["baseline_lux,log_contrast,prob_mean,prob_std"]
        for i, base in enumerate(self.baseline_lux):
            for j, c in enumerate(self.contrast):
                m, s = self.prob_mean[i, j], self.prob_std[i, j]
                m_txt = "" if np.isnan(m) else f"{m:.16e}"
                s_txt = "" if np.isnan(s) else f"{s:.16e}"
                lines.append(f"{base:.16e},{c:.16e},{m_txt},{s_txt}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def sample_thresholds(params: ModelParams, n_pixels: int, sigma_b: float,
                      seed: int) -> np.ndarray:
    """Per-pixel thresholds ~ Normal(B, sigma_b^2) truncated to [0, inf)."""
    rng = rng_from_seed(seed)
    return truncated_normal(rng, params.threshold, sigma_b, n_pixels)


def _grid_point(params: ModelParams, thresholds, lam, lam0, polarity,
                method: Method, apply_floor: bool):
    """Ensemble probabilities at one (baseline, contrast) point."""
    leak = params.leak(polarity)
    lc, lr = leak.evaluate(lam), leak.evaluate(lam0)
    if method is Method.SADDLE:
        p = model.saddle_prob_array(thresholds, lc, lr, lam, lam0, polarity)
    elif method is Method.GAUSSIAN:
        p = model.gaussian_kernel(thresholds, lc, lr, lam, lam0, polarity)
        p = np.asarray(p, float)
    else:
        p = np.array([model.poisson_tail_kernel(float(b), lc, lr, lam, lam0,
                                                polarity)[0]
                      for b in np.atleast_1d(thresholds)])
    if apply_floor:
        p = np.clip(p + params.floor(polarity), 0.0, 1.0)
    return p


def scurve_family(params: ModelParams, request: SCurveRequest) -> SCurveFamily:
    """Compute one S-curve family.

    Per grid point: lam0 = alpha * baseline, lam = lam0 * exp(contrast);
    the mean and ensemble standard deviation over the sampled per-pixel
    thresholds are reported. Degenerate-saddle points come back as NaN
    rather than aborting the family.
    """
    thresholds = sample_thresholds(params, request.n_pixels, request.sigma_b,
                                   request.seed)
    baselines = np.asarray(request.baseline_lux, dtype=float)
    contrasts = np.asarray(request.contrast_grid, dtype=float)
    mean = np.full((baselines.size, contrasts.size), np.nan)
    std = np.full_like(mean, np.nan)
    for i, base in enumerate(baselines):
        lam0 = params.lam_of_lux(base)
        for j, c in enumerate(contrasts):
            lam = lam0 * float(np.exp(c))
            polarity = Polarity.POSITIVE if c >= 0 else Polarity.NEGATIVE
            p = _grid_point(params, thresholds, lam, lam0, polarity,
                            request.method, request.apply_floor)
            good = np.isfinite(p)
            if not good.any():
                continue
            mean[i, j] = float(np.clip(np.mean(p[good]), 0.0, 1.0))
            std[i, j] = float(np.std(p[good]))
    return SCurveFamily(baselines, contrasts, mean, std, request)


# ---------------------------------------------------------------------------
# bias-setting utility maps
# ---------------------------------------------------------------------------

#: Linear map from the sensitivity bias setting to the log-contrast threshold.
BIAS_DIFF_SLOPE = 8.21e-4
BIAS_DIFF_INTERCEPT = 0.15

#: Reciprocal map from the refractory bias setting to dead time (us).
REFR_SCALE = 1530.72
REFR_POLE = 22.97
REFR_OFFSET = 12.45


def bias_to_threshold(k: int) -> float:
    """Log-contrast threshold produced by a sensitivity bias setting ``k``."""
    return BIAS_DIFF_SLOPE * float(k) + BIAS_DIFF_INTERCEPT


def refractory_time(b_r: int) -> float:
    """Dead time in microseconds for a refractory bias setting ``b_r``.

    Reciprocal form with a pole at -22.97; settings at or below the pole are
    rejected.
    """
    b_r = float(b_r)
    if b_r <= -REFR_POLE:
        raise DomainError(f"refractory bias must be > {-REFR_POLE}, got {b_r!r}")
    return REFR_SCALE / (b_r + REFR_POLE) + REFR_OFFSET
