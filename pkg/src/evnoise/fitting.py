"""Calibration of model parameters from measured noise curves.

The pipeline mirrors how the parameters are actually identifiable: for fixed
(threshold, alpha) the leakage value at each intensity can be solved for
directly (the static probability is monotone decreasing in the leakage), and
those samples are regressed onto the offset/shot/linear law. A coarse scan
plus a 2-D simplex over (threshold, alpha) with that inner inversion builds
the starting point; the full 8-parameter bounded simplex with multiple seeded
starts then minimizes the linear-space RMSE against both polarity curves (and
optional step-response data).
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize
from sklearn.base import BaseEstimator

from . import model
from .errors import (DomainError, NonConvergenceError, NoSolutionError,
                     SingularFitError)
from .params import (IntensityPair, LeakageCoefficients, Method, ModelParams,
                     Polarity)
from .recording import EmpiricalCurve
from .validation import as_float_array, check_probability

THETA_MAX = 1e9


@dataclass
class FitDataset:
    """Noise curve (required) and optional observed step-response points.

    ``scurves`` rows are (baseline_lux, log_contrast, prob_observed). A full
    fit wants >= 5 noise intensities spanning >= 2 decades; thinner datasets
    still run but are flagged under-determined.
    """

    noise: EmpiricalCurve
    scurves: np.ndarray = None
    noise_weight: float = 0.5
    scurve_weight: float = 0.5

    def __post_init__(self):
        if self.scurves is not None:
            arr = np.asarray(self.scurves, dtype=float)
            if arr.ndim != 2 or arr.shape[1] != 3:
                raise DomainError("scurves must be rows of "
                                  "(baseline_lux, log_contrast, prob_observed)")
            self.scurves = arr
        total = self.noise_weight + self.scurve_weight
        if total <= 0:
            raise DomainError("weights must be positive")

    @property
    def under_determined(self) -> bool:
        lux = self.noise.intensity_lux
        if lux.size < 5:
            return True
        span = lux.max() / max(lux.min(), 1e-300)
        return span < 100.0


@dataclass(frozen=True)
class FitConfig:
    """Bounds, method, and optimizer knobs for one fit."""

    threshold_bounds: tuple = (1e-3, 1.0)
    alpha_bounds: tuple = (0.5, 50.0)
    offset_bounds: tuple = (0.0, 200.0)
    shot_bounds: tuple = (0.0, 200.0)
    linear_bounds: tuple = (-5.0, 20.0)
    method: Method = Method.SADDLE
    n_starts: int = 8
    seed: int = 0
    max_fev: int = 5000
    xatol: float = 1e-10
    log_space: bool = False
    uncertainty: str = "temporal"  # or "spatial", for the chi-square metric
    refractory_us: float = 79.0
    grid_thresholds: tuple = (0.04, 0.06, 0.09, 0.13, 0.18, 0.25, 0.35, 0.5, 0.7, 0.95)
    grid_alphas: tuple = (1.0, 2.0, 3.5, 5.0, 7.0, 10.0, 15.0, 25.0, 40.0)

    def __post_init__(self):
        for name in ("threshold_bounds", "alpha_bounds", "offset_bounds",
                     "shot_bounds", "linear_bounds"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise DomainError(f"{name}: need lower < upper, got {(lo, hi)}")
        if self.uncertainty not in ("temporal", "spatial"):
            raise DomainError("uncertainty must be 'temporal' or 'spatial'")
        if self.n_starts < 1:
            raise DomainError("n_starts must be >= 1")


@dataclass
class FitResult:
    params: ModelParams
    objective: float
    rmse_pos: float
    rmse_neg: float
    chi2_nu_pos: float
    chi2_nu_neg: float
    r2_pos: float
    r2_neg: float
    peak_rrmse_pos: float
    peak_rrmse_neg: float
    trace: list = field(default_factory=list, repr=False)
    n_fallback: int = 0
    under_determined: bool = False
    n_evaluations: int = 0
    elapsed_s: float = 0.0

    def metrics(self, polarity: Polarity) -> tuple:
        if polarity is Polarity.POSITIVE:
            return (self.rmse_pos, self.chi2_nu_pos, self.r2_pos,
                    self.peak_rrmse_pos)
        return (self.rmse_neg, self.chi2_nu_neg, self.r2_neg,
                self.peak_rrmse_neg)


# ---------------------------------------------------------------------------
# single operations
# ---------------------------------------------------------------------------

def _static_prob_const_leak(threshold, alpha, lux, leak_value, polarity, method):
    """Static probability with a constant leakage value (arrays ok)."""
    lam = np.asarray(alpha, float) * np.asarray(lux, float)
    if method is Method.POISSON:
        return np.array([model.poisson_tail_kernel(float(np.broadcast_to(threshold, lam.shape).ravel()[i] if np.ndim(threshold) else threshold),
                                                   float(q), float(q), float(v), float(v),
                                                   polarity)[0]
                         for i, (q, v) in enumerate(zip(np.broadcast_to(leak_value, lam.shape).ravel(),
                                                        np.atleast_1d(lam)))]).reshape(np.shape(lam))
    return model.saddle_prob_array(threshold, leak_value, leak_value, lam, lam,
                                   polarity)


def invert_theta(partial: tuple, intensity_lux: float, observed_p: float,
                 polarity: Polarity, method: Method = Method.SADDLE,
                 rtol: float = 1e-3) -> float:
    """Solve for the constant leakage value reproducing an observed probability.

    Exploits that the static probability decreases monotonically in the
    leakage: doubling search for an upper bracket, then bisection until
    |P(theta) - observed| < rtol * observed. Raises NoSolutionError when the
    observation is unreachable (above P(0), or below P at the 1e9 cap).
    """
    threshold, alpha = float(partial[0]), float(partial[1])
    check_probability("observed_p", observed_p)
    if method not in (Method.POISSON, Method.SADDLE):
        raise DomainError("invert_theta supports the poisson and saddle methods")
    if not 0.0 < observed_p < 1.0:
        raise DomainError("observed_p must be strictly inside (0, 1)")

    def prob(theta: float) -> float:
        p = _static_prob_const_leak(threshold, alpha, intensity_lux, theta,
                                    polarity, method)
        p = float(np.atleast_1d(p)[0])
        if np.isnan(p):
            raise NoSolutionError(
                f"model degenerate at theta={theta:g} (intensity "
                f"{intensity_lux:g} lux)")
        return p

    p0 = prob(0.0)
    if abs(p0 - observed_p) <= rtol * observed_p:
        return 0.0
    if p0 < observed_p:
        raise NoSolutionError(
            f"observed probability {observed_p:g} exceeds the zero-leakage "
            f"value {p0:g}; no non-negative leakage can reach it")
    hi = 1.0
    while prob(hi) > observed_p:
        hi *= 2.0
        if hi > THETA_MAX:
            raise NoSolutionError(
                f"observed probability {observed_p:g} unreachable below "
                f"theta={THETA_MAX:g}")
    lo = hi / 2.0 if hi > 1.0 else 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        pm = prob(mid)
        if abs(pm - observed_p) <= rtol * observed_p:
            return mid
        if pm > observed_p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def fit_theta_form(theta_samples) -> tuple[LeakageCoefficients, float]:
    """Least squares of leakage samples onto {1, sqrt(lam), lam}.

    ``theta_samples`` is an iterable of (lam, theta). Returns the coefficient
    set and the residual RMS. Fewer than 3 samples or a rank-deficient design
    raise SingularFitError.
    """
    arr = np.asarray(list(theta_samples), dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 3:
        raise SingularFitError("need at least 3 (lam, theta) samples")
    lam, theta = arr[:, 0], arr[:, 1]
    design = np.column_stack([np.ones_like(lam), np.sqrt(lam), lam])
    coeffs, _, rank, _ = np.linalg.lstsq(design, theta, rcond=None)
    if rank < 3:
        raise SingularFitError(f"design matrix rank {rank} < 3 "
                               "(need >= 3 distinct photon counts)")
    resid = design @ coeffs - theta
    rms = float(np.sqrt(np.mean(resid ** 2)))
    c1, c2, c3 = (float(v) for v in coeffs)
    return LeakageCoefficients(max(c1, 0.0), max(c2, 0.0), c3), rms


def fit_metrics(observed, predicted, uncertainties=None):
    """(rmse, chi2_nu, r2, peak_rrmse) with the plain definitions.

    chi2_nu is the mean squared sigma-normalized residual; it needs strictly
    positive uncertainties and is NaN when none are given. peak_rrmse is
    rmse / max(observed).
    """
    obs = as_float_array("observed", observed)
    pred = as_float_array("predicted", predicted)
    if obs.shape != pred.shape or obs.size == 0:
        raise DomainError("observed and predicted must be equal-length, non-empty")
    res = pred - obs
    rmse = float(np.sqrt(np.mean(res ** 2)))
    if uncertainties is None:
        chi2 = float("nan")
    else:
        sig = as_float_array("uncertainties", uncertainties)
        if sig.shape != obs.shape:
            raise DomainError("uncertainties must match observations")
        if np.any(sig <= 0):
            raise DomainError("uncertainties must be > 0 for the chi-square")
        chi2 = float(np.mean((res / sig) ** 2))
    ss_res = float(np.sum(res ** 2))
    ss_tot = float(np.sum((obs - obs.mean()) ** 2))
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res == 0.0 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    peak = float(np.max(obs))
    if peak <= 0.0:
        raise DomainError("peak_rrmse undefined: max(observed) is not positive")
    return rmse, chi2, float(r2), rmse / peak


# ---------------------------------------------------------------------------
# the joint fit
# ---------------------------------------------------------------------------

def _bounds_arrays(config: FitConfig):
    lo = np.array([config.threshold_bounds[0], config.alpha_bounds[0]]
                  + [config.offset_bounds[0], config.shot_bounds[0],
                     config.linear_bounds[0]] * 2)
    hi = np.array([config.threshold_bounds[1], config.alpha_bounds[1]]
                  + [config.offset_bounds[1], config.shot_bounds[1],
                     config.linear_bounds[1]] * 2)
    return lo, hi


def _to_internal(x, lo, hi):
    u = np.clip((np.asarray(x, float) - lo) / (hi - lo), 1e-9, 1.0 - 1e-9)
    return np.arcsin(2.0 * u - 1.0)


def _to_external(z, lo, hi):
    return lo + (hi - lo) * (np.sin(z) + 1.0) / 2.0


class _Objective:
    """Linear- (or log-) space RMSE of the model against the dataset.

    Saddle-degenerate grid points contribute Gaussian-fallback values (the
    count is tracked); leakage laws going negative on the data's photon range
    are pushed back by a smooth penalty.
    """

    BAD = 1e6

    def __init__(self, dataset: FitDataset, config: FitConfig):
        self.config = config
        self.lux = dataset.noise.intensity_lux
        self.obs_pos = dataset.noise.p_pos
        self.obs_neg = dataset.noise.p_neg
        self.scurves = dataset.scurves
        total_w = dataset.noise_weight + dataset.scurve_weight
        self.w_noise = dataset.noise_weight / total_w
        self.w_scurve = dataset.scurve_weight / total_w
        self.n_fallback = 0
        self.n_eval = 0
        self.trace: list = []
        self.best = np.inf

    def _transform(self, p):
        if self.config.log_space:
            return np.log10(np.maximum(p, 1e-300))
        return p

    def curves(self, x):
        """Model noise curves for a parameter vector (raw, no floor)."""
        thr, alpha = x[0], x[1]
        lam = alpha * self.lux
        out = []
        for pol, c in ((Polarity.POSITIVE, x[2:5]), (Polarity.NEGATIVE, x[5:8])):
            leak = c[0] + c[1] * np.sqrt(lam) + c[2] * lam
            if self.config.method is Method.GAUSSIAN:
                p = np.asarray(model.gaussian_kernel(thr, leak, leak, lam, lam, pol),
                               dtype=float)
            else:
                p = model.saddle_prob_array(thr, leak, leak, lam, lam, pol)
                bad = ~np.isfinite(p)
                if bad.any():
                    self.n_fallback += int(bad.sum())
                    p = p.copy()
                    p[bad] = model.gaussian_kernel(thr, leak[bad], leak[bad],
                                                   lam[bad], lam[bad], pol)
            out.append(p)
        return out[0], out[1]

    def scurve_residuals(self, x):
        thr, alpha = x[0], x[1]
        base = self.scurves[:, 0]
        contrast = self.scurves[:, 1]
        obs = self.scurves[:, 2]
        lam0 = alpha * base
        lam = lam0 * np.exp(contrast)
        res = np.empty(obs.shape)
        for pol, sel in ((Polarity.POSITIVE, contrast >= 0),
                         (Polarity.NEGATIVE, contrast < 0)):
            if not sel.any():
                continue
            c = x[2:5] if pol is Polarity.POSITIVE else x[5:8]
            lc = c[0] + c[1] * np.sqrt(lam[sel]) + c[2] * lam[sel]
            lr = c[0] + c[1] * np.sqrt(lam0[sel]) + c[2] * lam0[sel]
            p = model.saddle_prob_array(thr, lc, lr, lam[sel], lam0[sel], pol)
            bad = ~np.isfinite(p)
            if bad.any():
                self.n_fallback += int(bad.sum())
                p = p.copy()
                p[bad] = model.gaussian_kernel(thr, lc[bad], lr[bad],
                                               lam[sel][bad], lam0[sel][bad], pol)
            res[sel] = self._transform(p) - self._transform(obs[sel])
        return res

    def __call__(self, x) -> float:
        self.n_eval += 1
        thr, alpha = x[0], x[1]
        lam = alpha * self.lux
        penalty = 0.0
        for c in (x[2:5], x[5:8]):
            leak = c[0] + c[1] * np.sqrt(lam) + c[2] * lam
            low = float(leak.min())
            if low < 0.0:
                penalty += 1.0 + abs(low)
        if penalty:
            return self.BAD * min(penalty, 1.0) + penalty
        p_pos, p_neg = self.curves(x)
        if np.any(~np.isfinite(p_pos)) or np.any(~np.isfinite(p_neg)):
            return self.BAD
        res = np.concatenate([self._transform(p_pos) - self._transform(self.obs_pos),
                              self._transform(p_neg) - self._transform(self.obs_neg)])
        value = self.w_noise * float(np.sqrt(np.mean(res ** 2)))
        if self.scurves is not None and self.scurves.size:
            sres = self.scurve_residuals(x)
            if np.any(~np.isfinite(sres)):
                return self.BAD
            value += self.w_scurve * float(np.sqrt(np.mean(sres ** 2)))
        if value < self.best:
            self.best = value
            self.trace.append((self.n_eval, value))
        return value


def _invert_leak_grid(objective: _Objective, thr: float, alpha: float,
                      observed, polarity: Polarity) -> np.ndarray:
    """Vector bisection for per-intensity constant leakage (init stage)."""
    lux = objective.lux
    lam = alpha * lux
    zeros = np.zeros_like(lam)

    def p_at(leak):
        p = model.saddle_prob_array(thr, leak, leak, lam, lam, polarity)
        return np.where(np.isfinite(p), p, -1.0)  # degenerate: treat as "too low"

    p0 = p_at(zeros)
    feasible = p0 > observed
    lo = np.zeros_like(lam)
    hi = np.ones_like(lam)
    for _ in range(40):
        need = feasible & (p_at(hi) > observed)
        if not need.any():
            break
        hi[need] = np.minimum(hi[need] * 2.0, THETA_MAX)
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        too_high = p_at(mid) > observed
        lo = np.where(feasible & too_high, mid, lo)
        hi = np.where(feasible & ~too_high, mid, hi)
    leak = 0.5 * (lo + hi)
    leak[~feasible] = 0.0
    return leak


def _init_coeffs(objective: _Objective, thr: float, alpha: float,
                 observed, polarity: Polarity, config: FitConfig):
    leak = _invert_leak_grid(objective, thr, alpha, observed, polarity)
    lam = alpha * objective.lux
    design = np.column_stack([np.ones_like(lam), np.sqrt(lam), lam])
    good = leak > 0
    if good.sum() < 3:
        good = np.ones_like(good, dtype=bool)
    coeffs, *_ = np.linalg.lstsq(design[good], leak[good], rcond=None)
    lo = np.array([config.offset_bounds[0], config.shot_bounds[0],
                   config.linear_bounds[0]])
    hi = np.array([config.offset_bounds[1], config.shot_bounds[1],
                   config.linear_bounds[1]])
    return np.clip(coeffs, lo + 1e-9, hi - 1e-9)


def fit_params(dataset: FitDataset, config: FitConfig = FitConfig()) -> FitResult:
    """Joint bounded fit of (threshold, alpha, per-polarity leakage laws).

    Stages: coarse (threshold, alpha) grid scan with per-intensity leakage
    inversion, 2-D simplex refinement of the scan leaders, then the full
    8-parameter Nelder-Mead under box constraints via a sine coordinate
    transformation, multi-started from the refined leaders plus seeded
    perturbations. Lowest objective wins, ties broken by start index. The
    probability floors are decided afterwards (`apply_cv`) and final metrics
    are computed from the floored parameters.
    """
    t0 = time.time()
    objective = _Objective(dataset, config)
    lo, hi = _bounds_arrays(config)

    def outer(v):
        thr, alpha = float(v[0]), float(v[1])
        if not (config.threshold_bounds[0] <= thr <= config.threshold_bounds[1]
                and config.alpha_bounds[0] <= alpha <= config.alpha_bounds[1]):
            return _Objective.BAD
        cp = _init_coeffs(objective, thr, alpha, objective.obs_pos,
                          Polarity.POSITIVE, config)
        cn = _init_coeffs(objective, thr, alpha, objective.obs_neg,
                          Polarity.NEGATIVE, config)
        return objective(np.concatenate([[thr, alpha], cp, cn]))

    scan = []
    for thr in config.grid_thresholds:
        if not config.threshold_bounds[0] <= thr <= config.threshold_bounds[1]:
            continue
        for alpha in config.grid_alphas:
            if not config.alpha_bounds[0] <= alpha <= config.alpha_bounds[1]:
                continue
            scan.append((outer([thr, alpha]), thr, alpha))
    scan.sort(key=lambda q: q[0])
    if not scan or not np.isfinite(scan[0][0]):
        raise NonConvergenceError("coarse scan found no feasible start", best=None)

    leaders = []
    for value, thr, alpha in scan[:3]:
        r2 = optimize.minimize(outer, [thr, alpha], method="Nelder-Mead",
                               options=dict(maxfev=200, xatol=1e-8, fatol=0,
                                            adaptive=True))
        leaders.append((float(r2.fun), tuple(np.asarray(r2.x, float))))
    leaders.sort(key=lambda q: q[0])
    distinct = []
    for value, v in leaders:
        if not any(abs(v[0] - u[0]) < 1e-3 and abs(v[1] - u[1]) < 1e-2
                   for _, u in distinct):
            distinct.append((value, v))

    starts = []
    for _, (thr, alpha) in distinct[:3]:
        cp = _init_coeffs(objective, thr, alpha, objective.obs_pos,
                          Polarity.POSITIVE, config)
        cn = _init_coeffs(objective, thr, alpha, objective.obs_neg,
                          Polarity.NEGATIVE, config)
        starts.append(np.clip(np.concatenate([[thr, alpha], cp, cn]),
                              lo + 1e-9, hi - 1e-9))

    rng = np.random.default_rng(config.seed)
    results = []
    for k in range(config.n_starts):
        base = starts[k % len(starts)]
        z0 = _to_internal(base, lo, hi)
        if k >= len(starts):
            z0 = z0 + 0.08 * rng.standard_normal(z0.size)
        run = optimize.minimize(lambda z: objective(_to_external(z, lo, hi)), z0,
                                method="Nelder-Mead",
                                options=dict(maxfev=config.max_fev,
                                             xatol=config.xatol, fatol=0,
                                             adaptive=True))
        results.append((float(run.fun), k, np.asarray(run.x)))
    results.sort(key=lambda q: (q[0], q[1]))
    best_value, _, best_z = results[0]
    if not np.isfinite(best_value) or best_value >= _Objective.BAD:
        raise NonConvergenceError(
            f"no start reached a feasible objective (best {best_value:g})",
            best=_to_external(best_z, lo, hi))

    x = _to_external(best_z, lo, hi)
    lam_max_data = float(np.max(dataset.noise.intensity_lux) * x[1]) * 1.05
    params = ModelParams(
        threshold=float(x[0]), alpha=float(x[1]),
        leak_pos=LeakageCoefficients(float(x[2]), float(x[3]), float(x[4])),
        leak_neg=LeakageCoefficients(float(x[5]), float(x[6]), float(x[7])),
        refractory_us=config.refractory_us,
        lambda_max=max(lam_max_data, 1.0),
    )
    params, objective_value = apply_cv(dataset, params, config, _objective=objective)

    sig_pos, sig_neg = _uncertainties(dataset, config)
    pred_pos, pred_neg, _ = model.noise_curve(params,
                                              dataset.noise.intensity_lux,
                                              method=config.method,
                                              apply_floor=True)
    m_pos = fit_metrics(dataset.noise.p_pos, pred_pos, sig_pos)
    m_neg = fit_metrics(dataset.noise.p_neg, pred_neg, sig_neg)
    return FitResult(
        params=params, objective=objective_value,
        rmse_pos=m_pos[0], rmse_neg=m_neg[0],
        chi2_nu_pos=m_pos[1], chi2_nu_neg=m_neg[1],
        r2_pos=m_pos[2], r2_neg=m_neg[2],
        peak_rrmse_pos=m_pos[3], peak_rrmse_neg=m_neg[3],
        trace=objective.trace, n_fallback=objective.n_fallback,
        under_determined=dataset.under_determined,
        n_evaluations=objective.n_eval, elapsed_s=time.time() - t0)


def _uncertainties(dataset: FitDataset, config: FitConfig):
    if config.uncertainty == "temporal":
        sig_pos = dataset.noise.std_temporal_pos
        sig_neg = dataset.noise.std_temporal_neg
    else:
        sig_pos = dataset.noise.std_spatial_pos
        sig_neg = dataset.noise.std_spatial_neg
    if sig_pos is None or sig_neg is None:
        return None, None
    if np.any(sig_pos <= 0) or np.any(sig_neg <= 0):
        return None, None
    return sig_pos, sig_neg


def apply_cv(dataset: FitDataset, params: ModelParams,
             config: FitConfig = FitConfig(), _objective=None):
    """Decide the per-polarity probability floors.

    The candidate floor is the smallest observed probability of that
    polarity; it is zero outright when any observation is zero, and it is
    kept only when it lowers the total objective. All four keep/drop
    combinations are compared; zero wins ties.
    """
    objective = _objective or _Objective(dataset, config)

    def floored_objective(f_pos, f_neg):
        trial = params.with_floors(f_pos, f_neg)
        pred_pos, pred_neg, _ = model.noise_curve(trial,
                                                  dataset.noise.intensity_lux,
                                                  method=config.method,
                                                  apply_floor=True)
        res = np.concatenate([
            objective._transform(pred_pos) - objective._transform(dataset.noise.p_pos),
            objective._transform(pred_neg) - objective._transform(dataset.noise.p_neg)])
        value = objective.w_noise * float(np.sqrt(np.mean(res ** 2)))
        if dataset.scurves is not None and dataset.scurves.size:
            x = np.concatenate([[trial.threshold, trial.alpha],
                                trial.leak_pos.as_tuple(), trial.leak_neg.as_tuple()])
            sres = objective.scurve_residuals(x)
            value += objective.w_scurve * float(np.sqrt(np.mean(sres ** 2)))
        return value

    cand_pos = 0.0 if np.any(dataset.noise.p_pos == 0.0) else float(
        np.min(dataset.noise.p_pos))
    cand_neg = 0.0 if np.any(dataset.noise.p_neg == 0.0) else float(
        np.min(dataset.noise.p_neg))
    combos = [(0.0, 0.0), (cand_pos, 0.0), (0.0, cand_neg), (cand_pos, cand_neg)]
    scored = [(floored_objective(fp, fn), i, fp, fn)
              for i, (fp, fn) in enumerate(combos)]
    scored.sort(key=lambda q: (q[0], q[1]))
    _, _, f_pos, f_neg = scored[0]
    return params.with_floors(f_pos, f_neg), scored[0][0]


# ---------------------------------------------------------------------------
# estimator facade
# ---------------------------------------------------------------------------

class NoiseModelEstimator(BaseEstimator):
    """Curve-fitting estimator with the fit/predict protocol.

    ``fit`` takes intensities (n,) and observed probabilities (n, 2) for the
    positive/negative polarities; ``predict`` evaluates the fitted model.
    Hyperparameters mirror FitConfig so grid search and cloning compose.
    """

    def __init__(self, method="saddle", n_starts=8, seed=0,
                 threshold_bounds=(1e-3, 1.0), alpha_bounds=(0.5, 50.0),
                 log_space=False, uncertainty="temporal", refractory_us=79.0):
        self.method = method
        self.n_starts = n_starts
        self.seed = seed
        self.threshold_bounds = threshold_bounds
        self.alpha_bounds = alpha_bounds
        self.log_space = log_space
        self.uncertainty = uncertainty
        self.refractory_us = refractory_us

    def _config(self) -> FitConfig:
        return FitConfig(method=Method.parse(self.method), n_starts=self.n_starts,
                         seed=self.seed, threshold_bounds=tuple(self.threshold_bounds),
                         alpha_bounds=tuple(self.alpha_bounds),
                         log_space=self.log_space, uncertainty=self.uncertainty,
                         refractory_us=self.refractory_us)

    def fit(self, X, y, std=None, scurves=None):
        X = as_float_array("X", X)
        y = np.asarray(y, dtype=float)
        if y.shape != (X.size, 2):
            raise DomainError("y must have shape (n, 2): positive and negative "
                              "probabilities per intensity")
        if std is None:
            std = np.full_like(y, np.nan)
        std = np.asarray(std, dtype=float)
        curve = EmpiricalCurve(X, y[:, 0], y[:, 1],
                               std_temporal_pos=std[:, 0],
                               std_temporal_neg=std[:, 1])
        dataset = FitDataset(curve, scurves=scurves)
        self.result_ = fit_params(dataset, self._config())
        self.params_ = self.result_.params
        return self

    def predict(self, X, polarity="pos"):
        if not hasattr(self, "params_"):
            raise DomainError("estimator is not fitted")
        X = as_float_array("X", X)
        p_pos, p_neg, _ = model.noise_curve(self.params_, X,
                                            method=self._config().method,
                                            apply_floor=True)
        return p_pos if polarity == "pos" else p_neg

    def score(self, X, y):
        """Coefficient of determination against both polarity curves."""
        y = np.asarray(y, dtype=float)
        pred = np.column_stack([self.predict(X, "pos"), self.predict(X, "neg")])
        _, _, r2, _ = fit_metrics(y.ravel(), pred.ravel())
        return r2
