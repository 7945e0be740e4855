"""Event recordings: loading, the dead-time-corrected probability estimator,
and temporal/spatial variance statistics.

The estimator for the per-pixel per-timestep event probability is

    p_hat(+/-) = N(+/-) / (T * M - R * N_tot)

with T the recording length in microseconds, M the number of included pixels,
R the refractory time, and N_tot the total event count. The subtraction
removes exposure lost to dead time.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (DegenerateRecordingError, DomainError, FormatError,
                     InsufficientDataError)
from .params import read_key_values, write_key_values
from .validation import check_nonnegative, check_positive


@dataclass(frozen=True)
class EventRecord:
    """One event: pixel column/row, microsecond timestamp, polarity +1/-1."""

    x: int
    y: int
    t: int
    p: int

    def __post_init__(self):
        if self.p not in (1, -1):
            raise DomainError(f"polarity must be +1 or -1, got {self.p!r}")
        if self.x < 0 or self.y < 0 or self.t < 0:
            raise DomainError("x, y, t must be >= 0")


@dataclass
class Recording:
    """An immutable-after-load event stream plus its metadata.

    Event columns are parallel int arrays sorted by timestamp. Events at
    excluded pixels are filtered out at construction; events outside the ROI
    or the duration are rejected outright.
    """

    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    p: np.ndarray
    duration_us: int
    width: int
    height: int
    refractory_us: float = 0.0
    intensity_lux: float = 0.0
    excluded_pixels: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        check_positive("duration_us", self.duration_us)
        check_positive("width", self.width)
        check_positive("height", self.height)
        check_nonnegative("refractory_us", self.refractory_us)
        check_nonnegative("intensity_lux", self.intensity_lux)
        x = np.asarray(self.x, dtype=np.int64)
        y = np.asarray(self.y, dtype=np.int64)
        t = np.asarray(self.t, dtype=np.int64)
        p = np.asarray(self.p, dtype=np.int8)
        if not (x.shape == y.shape == t.shape == p.shape):
            raise DomainError("event columns must have equal length")
        if x.size:
            if np.any((x < 0) | (x >= self.width) | (y < 0) | (y >= self.height)):
                raise DomainError("event outside the region of interest")
            if np.any((t < 0) | (t >= self.duration_us)):
                raise DomainError("event timestamp outside [0, duration)")
            if np.any((p != 1) & (p != -1)):
                raise DomainError("polarity must be +1 or -1")
            if np.any(np.diff(t) < 0):
                raise DomainError("events must be sorted by timestamp")
        if self.excluded_pixels:
            excl = frozenset((int(a), int(b)) for a, b in self.excluded_pixels)
            self.excluded_pixels = excl
            if x.size:
                pid = y * self.width + x
                excl_ids = np.fromiter(
                    (b * self.width + a for a, b in excl), dtype=np.int64,
                    count=len(excl))
                keep = ~np.isin(pid, excl_ids)
                x, y, t, p = x[keep], y[keep], t[keep], p[keep]
        self.x, self.y, self.t, self.p = x, y, t, p

    @property
    def n_events(self) -> int:
        return int(self.t.size)

    @property
    def included_pixels(self) -> int:
        return self.width * self.height - len(self.excluded_pixels)

    def pixel_ids(self) -> np.ndarray:
        return self.y * self.width + self.x

    def with_exclusions(self, excluded) -> "Recording":
        merged = frozenset(self.excluded_pixels) | frozenset(
            (int(a), int(b)) for a, b in excluded)
        return replace(self, excluded_pixels=merged)


@dataclass
class EmpiricalCurve:
    """Estimated noise probabilities per intensity, with their spreads."""

    intensity_lux: np.ndarray
    p_pos: np.ndarray
    p_neg: np.ndarray
    std_temporal_pos: np.ndarray
    std_temporal_neg: np.ndarray
    std_spatial_pos: np.ndarray = None
    std_spatial_neg: np.ndarray = None

    def __post_init__(self):
        n = len(self.intensity_lux)
        for name in ("p_pos", "p_neg", "std_temporal_pos", "std_temporal_neg"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (n,):
                raise DomainError(f"{name} must have shape ({n},)")
            setattr(self, name, v)
        self.intensity_lux = np.asarray(self.intensity_lux, dtype=float)
        for name in ("std_spatial_pos", "std_spatial_neg"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, np.asarray(v, dtype=float))

    def to_csv(self, path) -> None:
        has_spatial = self.std_spatial_pos is not None
        header = "intensity_lux,p_pos,p_neg,std_pos,std_neg"
        if has_spatial:
            header += ",std_spatial_pos,std_spatial_neg"
        lines = [header]
        for i in range(len(self.intensity_lux)):
            row = [self.intensity_lux[i], self.p_pos[i], self.p_neg[i],
                   self.std_temporal_pos[i], self.std_temporal_neg[i]]
            if has_spatial:
                row += [self.std_spatial_pos[i], self.std_spatial_neg[i]]
            lines.append(",".join(f"{v:.16e}" for v in row))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path) -> "EmpiricalCurve":
        path = Path(path)
        rows = []
        header = None
        for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            cells = [c.strip() for c in line.split(",")]
            if header is None:
                header = cells
                if cells[:5] != ["intensity_lux", "p_pos", "p_neg", "std_pos",
                                 "std_neg"]:
                    raise FormatError(f"{path}:{lineno}: unexpected header {cells}")
                continue
            try:
                rows.append([float(c) for c in cells])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
        if not rows:
            raise FormatError(f"{path}: no data rows")
        arr = np.asarray(rows, dtype=float)
        spatial = arr.shape[1] >= 7
        return cls(intensity_lux=arr[:, 0], p_pos=arr[:, 1], p_neg=arr[:, 2],
                   std_temporal_pos=arr[:, 3], std_temporal_neg=arr[:, 4],
                   std_spatial_pos=arr[:, 5] if spatial else None,
                   std_spatial_neg=arr[:, 6] if spatial else None)


# ---------------------------------------------------------------------------
# file I/O
# ---------------------------------------------------------------------------

def load_excluded_pixels(path) -> frozenset:
    """Read an excluded-pixel file: one `x,y` pair per line."""
    out = set()
    path = Path(path)
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise FormatError(f"{path}:{lineno}: expected 'x,y', got {raw!r}")
        try:
            out.add((int(parts[0]), int(parts[1])))
        except ValueError:
            raise FormatError(f"{path}:{lineno}: non-integer pixel {raw!r}") from None
    return frozenset(out)


def save_excluded_pixels(path, pixels) -> None:
    lines = [f"{x},{y}" for x, y in sorted(pixels)]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def load_recording(events_path, metadata_path, excluded_path=None) -> Recording:
    """Load an event CSV plus its key-value metadata sidecar.

    The CSV is strict: header `x,y,t,p`, integer cells, non-decreasing t,
    p in {1,-1}. Any malformed row aborts with its line number; out-of-ROI
    events are a hard error, not a silent drop.
    """
    meta = read_key_values(metadata_path)
    try:
        duration_us = int(float(meta["duration_us"]))
        width = int(meta["width"])
        height = int(meta["height"])
        refractory_us = float(meta.get("refractory_us", 0.0))
        intensity_lux = float(meta.get("intensity_lux", 0.0))
    except KeyError as exc:
        raise FormatError(f"{metadata_path}: missing key {exc}") from None
    except ValueError as exc:
        raise FormatError(f"{metadata_path}: {exc}") from None
    excluded = frozenset()
    if excluded_path is not None:
        excluded = load_excluded_pixels(excluded_path)
    elif "excluded" in meta and meta["excluded"]:
        excluded = load_excluded_pixels(
            Path(metadata_path).parent / meta["excluded"])

    events_path = Path(events_path)
    xs, ys, ts, ps = [], [], [], []
    with open(events_path) as fh:
        header = fh.readline().strip()
        if header != "x,y,t,p":
            raise FormatError(f"{events_path}:1: expected header 'x,y,t,p', "
                              f"got {header!r}")
        last_t = -1
        for lineno, raw in enumerate(fh, start=2):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise FormatError(f"{events_path}:{lineno}: expected 4 fields")
            try:
                x, y, t, p = (int(c) for c in parts)
            except ValueError:
                raise FormatError(
                    f"{events_path}:{lineno}: non-integer field in {line!r}") from None
            if p not in (1, -1):
                raise FormatError(f"{events_path}:{lineno}: polarity {p} not in {{1,-1}}")
            if not (0 <= x < width and 0 <= y < height):
                raise FormatError(
                    f"{events_path}:{lineno}: event ({x},{y}) outside ROI "
                    f"{width}x{height}")
            if not 0 <= t < duration_us:
                raise FormatError(
                    f"{events_path}:{lineno}: timestamp {t} outside [0,{duration_us})")
            if t < last_t:
                raise FormatError(
                    f"{events_path}:{lineno}: timestamps must be non-decreasing")
            last_t = t
            xs.append(x); ys.append(y); ts.append(t); ps.append(p)
    return Recording(np.asarray(xs, np.int64), np.asarray(ys, np.int64),
                     np.asarray(ts, np.int64), np.asarray(ps, np.int8),
                     duration_us=duration_us, width=width, height=height,
                     refractory_us=refractory_us, intensity_lux=intensity_lux,
                     excluded_pixels=excluded)


def save_recording(rec: Recording, events_path, metadata_path,
                   excluded_path=None) -> None:
    with open(events_path, "w") as fh:
        fh.write("x,y,t,p\n")
        for x, y, t, p in zip(rec.x, rec.y, rec.t, rec.p):
            fh.write(f"{x},{y},{t},{p}\n")
    meta = {
        "duration_us": rec.duration_us,
        "width": rec.width,
        "height": rec.height,
        "refractory_us": rec.refractory_us,
        "intensity_lux": rec.intensity_lux,
    }
    if excluded_path is not None:
        save_excluded_pixels(excluded_path, rec.excluded_pixels)
        meta["excluded"] = Path(excluded_path).name
    write_key_values(metadata_path, meta)


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------

def _corrected_estimate(n_pol: float, exposure_us: float, n_pixels: int,
                        n_tot: float, refractory_us: float) -> float:
    den = exposure_us * n_pixels - refractory_us * n_tot
    if den <= 0:
        raise DegenerateRecordingError(
            f"dead time swallows the exposure: T*M={exposure_us * n_pixels:g} "
            f"<= R*N_tot={refractory_us * n_tot:g}")
    return n_pol / den


def estimate_probability(rec: Recording, polarity) -> float:
    """Dead-time-corrected event probability per pixel per timestep."""
    sign = polarity.sign if hasattr(polarity, "sign") else int(polarity)
    n_pol = int(np.count_nonzero(rec.p == sign))
    return _corrected_estimate(n_pol, rec.duration_us, rec.included_pixels,
                               rec.n_events, rec.refractory_us)


def temporal_variance(rec: Recording, bin_us: int, polarity) -> tuple[float, float]:
    """Mean and sample std of per-bin probability estimates.

    The recording is cut into floor(T / bin_us) full bins (remainder events
    discarded); the estimator runs per bin with that bin's own event total
    for the dead-time correction.
    """
    if bin_us < 1:
        raise DomainError(f"bin_us must be >= 1, got {bin_us!r}")
    n_bins = rec.duration_us // int(bin_us)
    if n_bins < 2:
        raise InsufficientDataError(
            f"need >= 2 full bins, got {n_bins} (T={rec.duration_us}, bin={bin_us})")
    m = rec.included_pixels
    limit = n_bins * int(bin_us)
    in_range = rec.t < limit
    b = rec.t[in_range] // int(bin_us)
    pol = rec.p[in_range]
    sign = polarity.sign if hasattr(polarity, "sign") else int(polarity)
    n_pol = np.bincount(b[pol == sign], minlength=n_bins).astype(float)
    n_tot = np.bincount(b, minlength=n_bins).astype(float)
    den = float(bin_us) * m - rec.refractory_us * n_tot
    if np.any(den <= 0):
        raise DegenerateRecordingError(
            "dead time swallows at least one bin; use larger bins")
    est = n_pol / den
    return float(est.mean()), float(est.std(ddof=1))


def spatial_variance(rec: Recording, polarity) -> tuple[float, float]:
    """Mean and sample std of per-pixel probability estimates over the ROI."""
    m = rec.included_pixels
    if m < 2:
        raise InsufficientDataError(f"need >= 2 included pixels, got {m}")
    sign = polarity.sign if hasattr(polarity, "sign") else int(polarity)
    n_px = rec.width * rec.height
    pid = rec.pixel_ids()
    n_pol = np.bincount(pid[rec.p == sign], minlength=n_px).astype(float)
    n_tot = np.bincount(pid, minlength=n_px).astype(float)
    if rec.excluded_pixels:
        excl = np.fromiter((y * rec.width + x for x, y in rec.excluded_pixels),
                           dtype=np.int64, count=len(rec.excluded_pixels))
        keep = np.ones(n_px, dtype=bool)
        keep[excl] = False
    else:
        keep = np.ones(n_px, dtype=bool)
    den = float(rec.duration_us) - rec.refractory_us * n_tot[keep]
    if np.any(den <= 0):
        raise DegenerateRecordingError("dead time swallows a pixel's exposure")
    est = n_pol[keep] / den
    return float(est.mean()), float(est.std(ddof=1))


def bin_size_sweep(rec: Recording, polarity, bins) -> list[tuple[int, float]]:
    """Relative temporal std (std/mean) per requested bin size."""
    out = []
    for bin_us in bins:
        mean, std = temporal_variance(rec, int(bin_us), polarity)
        rel = std / mean if mean > 0 else float("nan")
        out.append((int(bin_us), rel))
    return out


def estimate_curve_row(rec: Recording, bin_us: int = 100) -> dict:
    """All estimator outputs for one recording, keyed like the curve CSV."""
    from .params import Polarity

    out = {"intensity_lux": rec.intensity_lux}
    for name, pol in (("pos", Polarity.POSITIVE), ("neg", Polarity.NEGATIVE)):
        out[f"p_{name}"] = estimate_probability(rec, pol)
        mean_t, std_t = temporal_variance(rec, bin_us, pol)
        out[f"std_{name}"] = std_t
        _, std_s = spatial_variance(rec, pol)
        out[f"std_spatial_{name}"] = std_s
        out[f"binned_mean_{name}"] = mean_t
    return out
