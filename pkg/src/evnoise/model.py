"""Event-probability model: exact Poisson, Gaussian, and saddle-point forms.

All three evaluate the probability that the detection variable

    Z(+) = n - exp(+B) * (n0 + leak(lam0)) + leak(lam)   crosses above 0, or
    Z(-) = n - exp(-B) * (n0 + leak(lam0)) + leak(lam)   crosses below 0,

where n ~ Pois(lam), n0 ~ Pois(lam0) are the photon counts of the current and
reference windows. The static (noise) case is lam == lam0.

Two API layers:

* ``*_kernel`` / ``*_array`` functions work on plain floats/arrays (threshold
  and already-evaluated leakage values). They make no assumptions beyond
  threshold >= 0 and exist so ensemble sweeps can vary per-pixel thresholds
  cheaply and so edge regimes outside the calibrated parameter envelope stay
  testable.
* The public operations take ``ModelParams`` + ``IntensityPair`` and return
  ``ProbResult``.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import special

from .errors import (CGFRangeError, DomainError, NoSaddleError,
                     SaddleDegenerateError)
from .params import IntensityPair, Method, ModelParams, Polarity, ProbResult
from .validation import check_nonnegative, check_positive

# Arguments to floor/ceil within this distance of an integer are snapped to it
# first, so strict-inequality trigger bounds survive floating-point noise.
BOUNDARY_SNAP = 1e-9

# |saddle| below this is treated as degenerate: the leading-order formula
# diverges like 1/s.
SADDLE_DEGENERATE_TOL = 1e-6

# Bracket expansion limit for the saddle search.
SADDLE_T_MAX = 50.0

_CGF_EXP_LIMIT = 700.0  # exp() overflow guard for float64


def theta_eval(coeffs, lam):
    """Evaluate the leakage law at mean photon count ``lam`` (array ok)."""
    return coeffs.evaluate(lam)


def _snap(x):
    r = np.round(x)
    return np.where(np.abs(x - r) < BOUNDARY_SNAP, r, x)


# ---------------------------------------------------------------------------
# exact Poisson
# ---------------------------------------------------------------------------

def _outer_grid(lam0: float, tol: float):
    """Reference-count grid, its log-weights, and the neglected-tail bound.

    The outer index runs to ceil(lam0 + 12*sqrt(lam0+1) + 30), expanded until
    a Chernoff bound on the dropped Poisson tail mass is <= tol:
    P(X >= a) <= exp(a - lam0 - a*ln(a/lam0)) for a > lam0.
    """
    if lam0 == 0.0:
        return np.array([0]), np.array([0.0]), 0.0
    n_max = math.ceil(lam0 + 12.0 * math.sqrt(lam0 + 1.0) + 30.0)
    while True:
        a = n_max + 1
        tail = math.exp(a - lam0 - a * math.log(a / lam0)) if a > lam0 else 1.0
        if tail <= tol or n_max > 50_000_000:
            break
        n_max = math.ceil(lam0 + 2.0 * (n_max - lam0))
    n0 = np.arange(n_max + 1)
    logw = -lam0 + n0 * math.log(lam0) - special.gammaln(n0 + 1)
    return n0, logw, tail


def poisson_tail_kernel(threshold: float, leak_cur: float, leak_ref: float,
                        lam: float, lam0: float, polarity: Polarity,
                        tol: float = 1e-12) -> tuple[float, float]:
    """Exact event probability by direct summation over photon counts.

    Returns ``(probability, truncation_error)``. The inner sums over the
    current-window count are evaluated through the regularized incomplete
    gamma function (Poisson survival/CDF) instead of literal series:
    P(n >= k) = gammainc(k, lam) and P(n <= m) = gammaincc(m+1, lam).

    For the positive polarity the current count must reach
    floor(e^B (n0 + leak_ref) - leak_cur) + 1; for the negative polarity it
    must stay at or below ceil(e^-B (n0 + leak_ref) - leak_cur) - 1, the
    ceiling minus one keeping the inequality strict.
    """
    if tol <= 0:
        raise DomainError(f"tol must be > 0, got {tol!r}")
    check_nonnegative("threshold", threshold)
    check_nonnegative("lam", lam)
    check_nonnegative("lam0", lam0)
    n0, logw, trunc = _outer_grid(lam0, tol)
    weights = np.exp(logw)
    if polarity is Polarity.POSITIVE:
        bound = np.floor(_snap(math.exp(threshold) * (n0 + leak_ref) - leak_cur)) + 1.0
        k = np.maximum(bound, 0.0)
        inner = np.where(k <= 0.0, 1.0, special.gammainc(np.maximum(k, 1.0), lam))
    else:
        bound = np.ceil(_snap(math.exp(-threshold) * (n0 + leak_ref) - leak_cur)) - 1.0
        inner = np.where(bound < 0.0, 0.0,
                         special.gammaincc(np.maximum(bound, 0.0) + 1.0, lam))
    # fsum keeps the two polarity paths consistent at the 1e-15 level
    value = math.fsum((weights * inner).tolist())
    return min(max(value, 0.0), 1.0), trunc


def poisson_prob(params: ModelParams, pair: IntensityPair, polarity: Polarity,
                 tol: float = 1e-12) -> ProbResult:
    """Exact Poisson event probability (raw model; no floor added)."""
    leak = params.leak(polarity)
    value, trunc = poisson_tail_kernel(
        params.threshold, leak.evaluate(pair.lam), leak.evaluate(pair.lam0),
        pair.lam, pair.lam0, polarity, tol=tol)
    return ProbResult(value, Method.POISSON, trunc)


# ---------------------------------------------------------------------------
# Gaussian approximation
# ---------------------------------------------------------------------------

def gaussian_kernel(threshold, leak_cur, leak_ref, lam, lam0, polarity: Polarity):
    """Gaussian-approximation probability; broadcasts over array inputs.

    P(+/-) = 1/2 +/- 1/2 erf((lam - e^{+/-B}(lam0 + leak_ref) + leak_cur)
                             / sqrt(2 (lam + e^{+/-2B} lam0)))

    Raises DomainError when both windows are photon-free and leakage-free
    (zero variance, zero mean: undefined); one-sided zero-variance limits
    resolve to 0 or 1 by the sign of the mean.
    """
    s = float(polarity.sign)
    a = np.exp(s * np.asarray(threshold, dtype=float))
    lam = np.asarray(lam, dtype=float)
    lam0 = np.asarray(lam0, dtype=float)
    num = lam - a * (lam0 + np.asarray(leak_ref, float)) + np.asarray(leak_cur, float)
    var = 2.0 * (lam + a * a * lam0)
    scalar = num.ndim == 0 and var.ndim == 0
    num, var = np.atleast_1d(num), np.atleast_1d(var)
    num, var = np.broadcast_arrays(num, var)
    zero = var == 0.0
    if np.any(zero & (num == 0.0)):
        raise DomainError("gaussian form undefined: zero variance and zero mean "
                          "(no photons, no leakage)")
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(zero, np.sign(num) * np.inf, num / np.sqrt(np.where(zero, 1.0, var)))
    out = np.clip(0.5 + s * 0.5 * special.erf(z), 0.0, 1.0)
    return float(out[0]) if scalar else out


def gaussian_prob(params: ModelParams, pair: IntensityPair,
                  polarity: Polarity) -> ProbResult:
    """Gaussian-approximation event probability (raw; clamped to [0, 1])."""
    leak = params.leak(polarity)
    value = gaussian_kernel(params.threshold, leak.evaluate(pair.lam),
                            leak.evaluate(pair.lam0), pair.lam, pair.lam0, polarity)
    return ProbResult(float(value), Method.GAUSSIAN)


# ---------------------------------------------------------------------------
# saddle-point approximation
# ---------------------------------------------------------------------------

def cgf_kernel(threshold, leak_cur, leak_ref, lam, lam0, polarity: Polarity, t):
    """Cumulant generating function of the detection variable, plus k', k''.

    k(t) = lam (e^t - 1) + lam0 (e^{-t a} - 1) + t leak_cur - t a leak_ref,
    a = e^{+/-B}. The reference photon term carries lam0, so the general
    (stimulus) case stays consistent with the static one.
    """
    s = float(polarity.sign)
    t_arr = np.asarray(t, dtype=float)
    a = np.exp(s * np.asarray(threshold, dtype=float))
    over = (t_arr > _CGF_EXP_LIMIT) | (-t_arr * a > _CGF_EXP_LIMIT)
    if np.any(over):
        bad = np.broadcast_to(t_arr, np.shape(over))[over] if np.ndim(over) else t_arr
        raise CGFRangeError(float(np.atleast_1d(bad).ravel()[0]))
    et = np.exp(t_arr)
    eat = np.exp(-t_arr * a)
    lam = np.asarray(lam, dtype=float)
    lam0 = np.asarray(lam0, dtype=float)
    leak_cur = np.asarray(leak_cur, dtype=float)
    leak_ref = np.asarray(leak_ref, dtype=float)
    k = lam * (et - 1.0) + lam0 * (eat - 1.0) + t_arr * leak_cur - t_arr * a * leak_ref
    k1 = lam * et - lam0 * a * eat + leak_cur - a * leak_ref
    k2 = lam * et + lam0 * a * a * eat
    if k.ndim == 0:
        return float(k), float(k1), float(k2)
    return k, k1, k2


def saddle_cgf(params: ModelParams, pair: IntensityPair, polarity: Polarity,
               t: float) -> tuple[float, float, float]:
    """CGF value and first two derivatives at ``t`` for the given model."""
    if not np.isfinite(t):
        raise DomainError(f"t must be finite, got {t!r}")
    leak = params.leak(polarity)
    return cgf_kernel(params.threshold, leak.evaluate(pair.lam),
                      leak.evaluate(pair.lam0), pair.lam, pair.lam0, polarity, t)


def _saddle_root_flat(thr, lc, lr, lam, lam0, polarity):
    """Solve k'(s) = 0 elementwise on flat 1-D arrays.

    Returns (s, bracketed). k' is strictly increasing (k'' > 0 whenever any
    photons are present), so bracket expansion from [-1e-4, 1e-4] out to
    |t| = 50 followed by Newton steps safeguarded by bisection cannot miss
    the root.
    """
    s_pol = float(polarity.sign)
    a = np.exp(s_pol * thr)
    d = lc - a * lr

    def k1(t):
        return lam * np.exp(t) - lam0 * a * np.exp(-t * a) + d

    def k2(t):
        return lam * np.exp(t) + lam0 * a * a * np.exp(-t * a)

    lo = np.full(lam.shape, -1e-4)
    hi = np.full(lam.shape, 1e-4)
    for _ in range(25):
        need = (k1(hi) < 0.0) & (hi < SADDLE_T_MAX)
        if not need.any():
            break
        hi[need] = np.minimum(hi[need] * 2.0, SADDLE_T_MAX)
    for _ in range(25):
        need = (k1(lo) > 0.0) & (lo > -SADDLE_T_MAX)
        if not need.any():
            break
        lo[need] = np.maximum(lo[need] * 2.0, -SADDLE_T_MAX)
    bracketed = (k1(lo) <= 0.0) & (k1(hi) >= 0.0)
    scale = np.maximum(1.0, lam + lam0 * a + np.abs(d))
    t = np.clip(-k1(np.zeros_like(lam)) / np.maximum(k2(np.zeros_like(lam)), 1e-300),
                lo, hi)
    for _ in range(90):
        f = k1(t)
        lo = np.where(f < 0.0, t, lo)
        hi = np.where(f > 0.0, t, hi)
        t_new = t - f / np.maximum(k2(t), 1e-300)
        outside = (t_new <= lo) | (t_new >= hi)
        t_new = np.where(outside, 0.5 * (lo + hi), t_new)
        done = np.abs(f) <= 1e-12 * scale
        t = np.where(done, t, t_new)
        if bool(done.all()):
            break
    return t, bracketed


def saddle_prob_array(threshold, leak_cur, leak_ref, lam, lam0,
                      polarity: Polarity):
    """Vectorized saddle-point probability.

    NaN marks elements where the leading-order formula does not apply: no
    bracketed saddle within |t| <= 50, or a near-zero saddle (threshold at
    the distribution center). Both photon rates zero gives an exact 0. When
    the saddle lands on the far side of zero (stimulus past threshold, event
    probability > 1/2) the complementary tail is evaluated so step-response
    curves saturate to 1 instead of failing.
    """
    shape = np.broadcast_shapes(np.shape(threshold), np.shape(leak_cur),
                                np.shape(leak_ref), np.shape(lam), np.shape(lam0))
    thr, lc, lr, lam_b, lam0_b = (
        np.broadcast_to(np.asarray(v, float), shape).reshape(-1).copy()
        for v in (threshold, leak_cur, leak_ref, lam, lam0))
    out = np.full(thr.shape, np.nan)
    zero = (lam_b == 0.0) & (lam0_b == 0.0)
    out[zero] = 0.0
    act = ~zero
    if act.any():
        s, bracketed = _saddle_root_flat(thr[act], lc[act], lr[act],
                                         lam_b[act], lam0_b[act], polarity)
        k, _, k2 = cgf_kernel(thr[act], lc[act], lr[act], lam_b[act], lam0_b[act],
                              polarity, s)
        k, k2 = np.atleast_1d(k), np.atleast_1d(k2)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            tail = np.exp(k) / (s * np.sqrt(2.0 * np.pi * k2))
        if polarity is Polarity.POSITIVE:
            p = np.where(s > 0.0, tail, 1.0 + tail)
        else:
            p = np.where(s < 0.0, -tail, 1.0 - tail)
        p = np.where(np.abs(s) < SADDLE_DEGENERATE_TOL, np.nan, p)
        p = np.where(bracketed, p, np.nan)
        out[act] = np.where(np.isnan(p), np.nan, np.clip(p, 0.0, 1.0))
    return out.reshape(shape)


def saddle_prob(params: ModelParams, pair: IntensityPair,
                polarity: Polarity) -> ProbResult:
    """Saddle-point event probability (raw; clamped to [0, 1]).

    Raises SaddleDegenerateError when |s| < 1e-6 (callers may fall back to
    gaussian_prob) and NoSaddleError when no bracketed root exists within
    |t| <= 50.
    """
    if pair.lam == 0.0 and pair.lam0 == 0.0:
        return ProbResult(0.0, Method.SADDLE)
    leak = params.leak(polarity)
    lc, lr = leak.evaluate(pair.lam), leak.evaluate(pair.lam0)
    s, bracketed = _saddle_root_flat(
        np.atleast_1d(float(params.threshold)), np.atleast_1d(float(lc)),
        np.atleast_1d(float(lr)), np.atleast_1d(float(pair.lam)),
        np.atleast_1d(float(pair.lam0)), polarity)
    if not bool(bracketed[0]):
        raise NoSaddleError(
            f"no saddle bracket within |t| <= {SADDLE_T_MAX:g} "
            f"(lam={pair.lam:g}, lam0={pair.lam0:g})")
    if abs(float(s[0])) < SADDLE_DEGENERATE_TOL:
        raise SaddleDegenerateError(float(s[0]))
    value = saddle_prob_array(params.threshold, lc, lr, pair.lam, pair.lam0, polarity)
    return ProbResult(float(value), Method.SADDLE)


# ---------------------------------------------------------------------------
# dispatch and derived quantities
# ---------------------------------------------------------------------------

def event_prob(params: ModelParams, pair: IntensityPair, polarity: Polarity,
               method: Method = Method.SADDLE, apply_floor: bool = False,
               tol: float = 1e-12) -> ProbResult:
    """Event probability by the chosen method, optionally with the floor added.

    With ``apply_floor`` the polarity's additive probability floor is added
    and the result clamped to [0, 1].
    """
    if method is Method.POISSON:
        res = poisson_prob(params, pair, polarity, tol=tol)
    elif method is Method.GAUSSIAN:
        res = gaussian_prob(params, pair, polarity)
    elif method is Method.SADDLE:
        res = saddle_prob(params, pair, polarity)
    else:  # pragma: no cover - enum is closed
        raise DomainError(f"unknown method {method!r}")
    if apply_floor:
        value = min(max(res.value + params.floor(polarity), 0.0), 1.0)
        res = ProbResult(value, res.method, res.truncation_error)
    return res


def null_prob(params: ModelParams, pair: IntensityPair,
              method: Method = Method.SADDLE, tol: float = 1e-12) -> float:
    """Probability of no event: max(0, 1 - P(+) - P(-))."""
    p_pos = event_prob(params, pair, Polarity.POSITIVE, method, tol=tol).value
    p_neg = event_prob(params, pair, Polarity.NEGATIVE, method, tol=tol).value
    return max(0.0, 1.0 - p_pos - p_neg)


def noise_curve(params: ModelParams, lux_values, method: Method = Method.SADDLE,
                apply_floor: bool = True, tol: float = 1e-12):
    """Static-scene probability curves over an illuminance grid.

    Returns ``(p_pos, p_neg, n_fallback)`` arrays plus how many grid points
    needed the Gaussian fallback (degenerate saddle). Poisson evaluation
    loops pointwise and is the slow path.
    """
    lux = np.atleast_1d(np.asarray(lux_values, dtype=float))
    lam = params.lam_of_lux(lux)
    out = {}
    fallback = 0
    for pol in (Polarity.POSITIVE, Polarity.NEGATIVE):
        leak = params.leak(pol).evaluate(lam)
        if method is Method.SADDLE:
            p = saddle_prob_array(params.threshold, leak, leak, lam, lam, pol)
            bad = ~np.isfinite(p)
            if bad.any():
                fallback += int(bad.sum())
                p = p.copy()
                p[bad] = gaussian_kernel(params.threshold, leak[bad], leak[bad],
                                         lam[bad], lam[bad], pol)
        elif method is Method.GAUSSIAN:
            p = np.asarray(gaussian_kernel(params.threshold, leak, leak, lam,
                                           lam, pol), dtype=float)
        else:
            p = np.array([poisson_tail_kernel(params.threshold, float(q), float(q),
                                              float(v), float(v), pol, tol=tol)[0]
                          for q, v in zip(np.atleast_1d(leak), lam)])
        if apply_floor:
            p = np.clip(p + params.floor(pol), 0.0, 1.0)
        out[pol] = p
    return out[Polarity.POSITIVE], out[Polarity.NEGATIVE], fallback


# Planck constant [J s] and speed of light [m/s], 2019 SI exact values.
_PLANCK = 6.62607015e-34
_LIGHT_SPEED = 299792458.0


def radiometric_alpha(pixel_side_um: float, efficacy_lm_per_w: float,
                      wavelength_nm: float) -> float:
    """First-principles photons-per-lux-per-microsecond for one pixel.

    A square pixel of side ``pixel_side_um`` under illuminance I lux collects
    luminous flux I * A_px; dividing by the source's luminous efficacy gives
    radiant power, and dividing by the photon energy h c / wavelength gives a
    photon rate. Scaled to a one-microsecond timestep.
    """
    side = check_positive("pixel_side_um", pixel_side_um) * 1e-6
    k_v = check_positive("efficacy_lm_per_w", efficacy_lm_per_w)
    wavelength = check_positive("wavelength_nm", wavelength_nm) * 1e-9
    area = side * side
    rate_per_lux_s = area * wavelength / (k_v * _PLANCK * _LIGHT_SPEED)
    return rate_per_lux_s * 1e-6
