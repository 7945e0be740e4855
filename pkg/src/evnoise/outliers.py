"""Run-length statistics over per-pixel event sequences and outlier tests.

A run is a stretch of consecutive timesteps in which a pixel keeps reporting
events of one polarity; its length m counts the events in the stretch, so
several events inside one timestep extend the current run. Correctly behaving
pixels observe their refractory dead time and can only produce m = 1 runs:
any m >= 2 is physically disallowed behavior.

Tests provided: physically-disallowed multi-event runs, excessive m = 1
counts (k-sigma rule), and Poisson deviance residuals against a
multiple-testing-corrected threshold.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from .errors import (DevianceNotApplicableError, DomainError,
                     InsufficientDataError)
from .params import Polarity
from .recording import Recording, save_excluded_pixels

FLAG_MULTI_EVENT = "multi_event"
FLAG_HOT_COUNTS = "hot_counts"
FLAG_DEVIANCE = "deviance"


@dataclass
class RunStats:
    """Per-pixel, per-polarity run-length histograms.

    ``runs[pol]`` maps pixel id -> {run length m: frequency}. Pixels without
    events of a polarity simply have no entry. ``m1_counts(pol)`` gives the
    dense per-pixel frequency of m = 1 runs across the whole array, which is
    what the count-based tests operate on.
    """

    width: int
    height: int
    runs: dict = field(default_factory=dict)
    included: np.ndarray = None

    def __post_init__(self):
        for pol in Polarity:
            self.runs.setdefault(pol, {})
        if self.included is None:
            self.included = np.ones(self.width * self.height, dtype=bool)

    @classmethod
    def from_counts(cls, width: int, height: int, counts_pos, counts_neg) -> "RunStats":
        """Build stats from dense per-pixel m = 1 counts (simulation aid)."""
        stats = cls(width, height)
        for pol, counts in ((Polarity.POSITIVE, counts_pos),
                            (Polarity.NEGATIVE, counts_neg)):
            counts = np.asarray(counts).reshape(-1)
            if counts.size != width * height:
                raise DomainError("counts shape does not match width*height")
            stats.runs[pol] = {int(i): {1: int(c)} for i, c in enumerate(counts)
                               if c > 0}
        return stats

    def m1_counts(self, polarity: Polarity) -> np.ndarray:
        out = np.zeros(self.width * self.height, dtype=np.int64)
        for pid, hist in self.runs[polarity].items():
            out[pid] = hist.get(1, 0)
        return out

    def total_events(self, polarity: Polarity) -> np.ndarray:
        out = np.zeros(self.width * self.height, dtype=np.int64)
        for pid, hist in self.runs[polarity].items():
            out[pid] = sum(m * freq for m, freq in hist.items())
        return out

    def max_run_length(self, polarity: Polarity) -> int:
        longest = 0
        for hist in self.runs[polarity].values():
            longest = max(longest, max(hist))
        return longest


@dataclass
class OutlierReport:
    """Flags and residuals for every included pixel of a recording."""

    width: int
    height: int
    flags: list  # (x, y, flag, polarity, value)
    excluded: frozenset
    deviance_applicable: dict
    residuals: dict = field(default_factory=dict, repr=False)
    threshold: float = float("nan")

    def flagged_pixels(self) -> frozenset:
        return frozenset((f[0], f[1]) for f in self.flags)

    def to_csv(self, path) -> None:
        lines = ["x,y,flag,polarity,value"]
        for x, y, flag, pol, value in sorted(self.flags,
                                             key=lambda f: (f[1], f[0], f[2], f[3])):
            lines.append(f"{x},{y},{flag},{pol},{value:.16e}")
        Path(path).write_text("\n".join(lines) + "\n")

    def save_exclusions(self, path) -> None:
        save_excluded_pixels(path, self.flagged_pixels())


def run_length_stats(rec: Recording) -> RunStats:
    """Group each pixel's events into consecutive-timestep runs per polarity.

    Events at the same timestep or at adjacent timestamps (gap of one
    microsecond) belong to one run; the run length is the number of events
    it contains.
    """
    stats = RunStats(rec.width, rec.height)
    if rec.excluded_pixels:
        for x, y in rec.excluded_pixels:
            stats.included[y * rec.width + x] = False
    pid = rec.pixel_ids()
    for pol in Polarity:
        mask = rec.p == pol.sign
        if not mask.any():
            continue
        pp = pid[mask]
        tt = rec.t[mask]
        order = np.lexsort((tt, pp))
        pp, tt = pp[order], tt[order]
        # a new run starts at a pixel change or a timestamp gap > 1
        new_run = np.ones(pp.size, dtype=bool)
        if pp.size > 1:
            same_pixel = pp[1:] == pp[:-1]
            small_gap = (tt[1:] - tt[:-1]) <= 1
            new_run[1:] = ~(same_pixel & small_gap)
        run_id = np.cumsum(new_run) - 1
        run_len = np.bincount(run_id)
        run_pixel = pp[new_run]
        table: dict = {}
        for pixel, m in zip(run_pixel.tolist(), run_len.tolist()):
            hist = table.setdefault(pixel, {})
            hist[m] = hist.get(m, 0) + 1
        stats.runs[pol] = table
    return stats


def detect_type2(stats: RunStats) -> frozenset:
    """Pixels with any run of length >= 2 in either polarity."""
    bad = set()
    for pol in Polarity:
        for pid, hist in stats.runs[pol].items():
            if any(m >= 2 for m in hist):
                bad.add((pid % stats.width, pid // stats.width))
    return frozenset(bad)


def detect_hot_counts(stats: RunStats, k_sigma: float = 20.0) -> frozenset:
    """Pixels whose m = 1 frequency exceeds mean + k_sigma * std (per polarity).

    A uniform array (zero spread) defines zero outliers.
    """
    if int(stats.included.sum()) < 2:
        raise InsufficientDataError("need >= 2 included pixels")
    bad = set()
    for pol in Polarity:
        counts = stats.m1_counts(pol)[stats.included].astype(float)
        mean, std = counts.mean(), counts.std()
        if std == 0.0 or not np.isfinite(k_sigma):
            continue
        cutoff = mean + k_sigma * std
        hot = np.flatnonzero(stats.included)[
            stats.m1_counts(pol)[stats.included] > cutoff]
        bad.update((int(q % stats.width), int(q // stats.width)) for q in hot)
    return frozenset(bad)


def deviance_residuals(stats: RunStats, polarity: Polarity) -> np.ndarray:
    """Signed square-root Poisson deviance of each pixel's m = 1 frequency.

    r_i = sign(l_i - lbar) * sqrt(2 (l_i ln(l_i / lbar) - (l_i - lbar))),
    with l ln(l / lbar) = 0 at l = 0. Under a clean array these are roughly
    standard normal. Undefined when the array mean is zero.
    """
    counts = stats.m1_counts(polarity)[stats.included].astype(float)
    lbar = counts.mean()
    if lbar == 0.0:
        raise DevianceNotApplicableError(
            "deviance residuals need a nonzero mean count")
    with np.errstate(divide="ignore", invalid="ignore"):
        log_term = np.where(counts > 0, counts * np.log(counts / lbar), 0.0)
    dev = 2.0 * (log_term - (counts - lbar))
    return np.sign(counts - lbar) * np.sqrt(np.maximum(dev, 0.0))


def bonferroni_threshold(a_hat: float, n_pixels: int) -> float:
    """Multiple-testing-corrected residual cutoff Phi^-1(1 - a_hat / (2 M))."""
    if not 0.0 < a_hat < 1.0:
        raise DomainError(f"a_hat must be in (0, 1), got {a_hat!r}")
    if n_pixels < 1:
        raise DomainError(f"n_pixels must be >= 1, got {n_pixels!r}")
    return float(special.ndtri(1.0 - a_hat / (2.0 * n_pixels)))


@dataclass(frozen=True)
class OutlierConfig:
    a_hat: float = 0.01
    k_sigma: float = 20.0
    run_multi_event: bool = True
    run_hot_counts: bool = True
    run_deviance: bool = True


def detect_outliers(rec: Recording, config: OutlierConfig = OutlierConfig()) -> OutlierReport:
    """Run the single-recording outlier tests and assemble a report.

    Deviance flags pixels with |r| above the corrected threshold; polarities
    with no events at all are skipped and noted as not applicable. Repeated
    bright-spot and stimulus-response screening need multiple recordings and
    are left to accumulation-image workflows outside this function.
    """
    stats = run_length_stats(rec)
    flags: list = []
    applicable = {}
    residuals = {}
    m = int(stats.included.sum())
    eps = bonferroni_threshold(config.a_hat, m) if m >= 1 else float("nan")
    if config.run_multi_event:
        for x, y in sorted(detect_type2(stats)):
            longest = 0
            pid = y * rec.width + x
            for pol in Polarity:
                hist = stats.runs[pol].get(pid, {})
                longest = max([longest] + [mm for mm in hist if mm >= 2])
            flags.append((x, y, FLAG_MULTI_EVENT, "both", float(longest)))
    for pol, pol_name in ((Polarity.POSITIVE, "pos"), (Polarity.NEGATIVE, "neg")):
        counts = stats.m1_counts(pol)[stats.included].astype(float)
        if config.run_hot_counts:
            mean, std = counts.mean(), counts.std()
            if std > 0:
                cutoff = mean + config.k_sigma * std
                for q in np.flatnonzero(stats.included)[
                        stats.m1_counts(pol)[stats.included] > cutoff]:
                    flags.append((int(q % rec.width), int(q // rec.width),
                                  FLAG_HOT_COUNTS, pol_name,
                                  float(stats.m1_counts(pol)[q])))
        if config.run_deviance:
            if counts.mean() == 0.0:
                applicable[pol_name] = False
                continue
            applicable[pol_name] = True
            r = deviance_residuals(stats, pol)
            residuals[pol_name] = r
            ids = np.flatnonzero(stats.included)[np.abs(r) > eps]
            r_bad = r[np.abs(r) > eps]
            for q, rv in zip(ids, r_bad):
                flags.append((int(q % rec.width), int(q // rec.width),
                              FLAG_DEVIANCE, pol_name, float(rv)))
    report = OutlierReport(rec.width, rec.height, flags,
                           frozenset((f[0], f[1]) for f in flags),
                           applicable, residuals, eps)
    return report
