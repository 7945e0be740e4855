"""Synthetic noise-event images and event-stream recordings.

Per pixel the generator samples a threshold from a truncated normal and a
multiplicative leakage perturbation, evaluates the chosen probability model,
applies the dead-time correction, and draws event counts from a binomial over
the integration window (one trial per microsecond). The recording variant
realizes the same model as a timestamped event stream with explicit
refractory blindness.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import model
from .errors import DomainError, FormatError
from .params import Method, ModelParams, Polarity, write_key_values, read_key_values
from .recording import Recording
from .sampling import rng_from_seed, truncated_normal
from .validation import check_nonnegative

logger = logging.getLogger(__name__)

# Greyscale display calibration (maximum screen brightness): lux for an 8-bit
# greyscale level g is GREY_SCALE * g**GREY_EXPONENT + GREY_OFFSET.
GREY_SCALE = 2.15e-5
GREY_EXPONENT = 2.521
GREY_OFFSET = 0.15

# Per-pixel spread defaults used for synthesis, per probability model family.
SYNTH_SIGMA_B = {Method.GAUSSIAN: 0.0065, Method.SADDLE: 0.0065,
                 Method.POISSON: 0.006}
SYNTH_SIGMA_X = {Method.GAUSSIAN: 0.001, Method.SADDLE: 0.001,
                 Method.POISSON: 0.0005}

PGM_MAX16 = 65535


def greyscale_to_intensity(g, mapping=None):
    """Map 8-bit greyscale values to scene illuminance in lux.

    ``mapping`` may replace the built-in power-law calibration with any
    callable g -> lux (screens at other brightness settings need their own
    table).
    """
    arr = np.asarray(g, dtype=float)
    if np.any((arr < 0) | (arr > 255)):
        raise DomainError("greyscale values must lie in [0, 255]")
    if mapping is not None:
        out = np.asarray(mapping(arr), dtype=float)
    else:
        out = GREY_SCALE * np.power(arr, GREY_EXPONENT) + GREY_OFFSET
    return float(out) if out.ndim == 0 else out


@dataclass
class PixelEnsemble:
    """Sampled per-pixel thresholds and leakage multipliers."""

    thresholds: np.ndarray
    leak_scale: np.ndarray
    mu_b: float
    sigma_b: float
    sigma_x: float
    seed: int

    @property
    def shape(self):
        return self.thresholds.shape


def sample_ensemble(width: int, height: int, mu_b: float, sigma_b: float,
                    sigma_x: float, seed: int) -> PixelEnsemble:
    """Draw the per-pixel ensemble for a width x height array.

    Thresholds come from Normal(mu_b, sigma_b^2) truncated to [0, inf) via
    rejection; leakage multipliers from Normal(1, sigma_x^2). Reproducible
    from (seed, width, height).
    """
    check_nonnegative("sigma_b", sigma_b)
    check_nonnegative("sigma_x", sigma_x)
    n = int(width) * int(height)
    rng = rng_from_seed(seed, stream=0)
    thresholds = truncated_normal(rng, mu_b, sigma_b, n).reshape(height, width)
    rng_x = rng_from_seed(seed, stream=1)
    if sigma_x == 0.0:
        leak_scale = np.ones((height, width))
    else:
        leak_scale = rng_x.normal(1.0, sigma_x, n).reshape(height, width)
    return PixelEnsemble(thresholds, leak_scale, mu_b, sigma_b, sigma_x, seed)


def effective_probability(p_pos, p_neg, refractory_us: float):
    """Dead-time-corrected per-timestep probabilities.

    p_eff(+/-) = p(+/-) / (1 + (p_pos + p_neg) * R); requires
    p_pos + p_neg < 1 and R >= 0. Works elementwise on arrays.
    """
    check_nonnegative("refractory_us", refractory_us)
    p_pos = np.asarray(p_pos, dtype=float)
    p_neg = np.asarray(p_neg, dtype=float)
    if np.any(p_pos < 0) or np.any(p_neg < 0):
        raise DomainError("probabilities must be >= 0")
    total = p_pos + p_neg
    if np.any(total >= 1.0):
        raise DomainError("p_pos + p_neg must be < 1")
    corr = 1.0 + total * refractory_us
    out_pos, out_neg = p_pos / corr, p_neg / corr
    if out_pos.ndim == 0:
        return float(out_pos), float(out_neg)
    return out_pos, out_neg


@dataclass
class NoiseImage:
    """Per-pixel positive/negative event counts over an integration window."""

    width: int
    height: int
    counts_pos: np.ndarray
    counts_neg: np.ndarray
    integration_us: int
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("counts_pos", "counts_neg"):
            arr = np.asarray(getattr(self, name))
            if arr.shape != (self.height, self.width):
                raise DomainError(f"{name} must have shape (height, width)")
            if arr.size and (arr.min() < 0 or arr.max() > self.integration_us):
                raise DomainError(f"{name} outside [0, integration_us]")
            setattr(self, name, arr.astype(np.int64))

    def to_csv(self, path) -> None:
        lines = ["x,y,count_pos,count_neg"]
        for y in range(self.height):
            for x in range(self.width):
                lines.append(f"{x},{y},{self.counts_pos[y, x]},{self.counts_neg[y, x]}")
        Path(path).write_text("\n".join(lines) + "\n")


def _model_probabilities(params: ModelParams, lam, thresholds, leak_scale,
                         method: Method):
    """Raw per-pixel event probabilities for a static scene at ``lam``.

    Saddle-degenerate pixels fall back to the Gaussian form; the count is
    logged. Exact Poisson is evaluated pixel by pixel and is slow on large
    arrays.
    """
    out = {}
    for pol in (Polarity.POSITIVE, Polarity.NEGATIVE):
        leak = params.leak(pol).evaluate(lam) * leak_scale
        if method is Method.GAUSSIAN:
            p = np.asarray(model.gaussian_kernel(thresholds, leak, leak, lam, lam,
                                                 pol), dtype=float)
        elif method is Method.SADDLE:
            p = model.saddle_prob_array(thresholds, leak, leak, lam, lam, pol)
            bad = ~np.isfinite(p)
            if bad.any():
                logger.info("saddle degenerate at %d pixels; gaussian fallback",
                            int(bad.sum()))
                fallback = model.gaussian_kernel(
                    np.asarray(thresholds)[bad] if np.ndim(thresholds) else thresholds,
                    np.asarray(leak)[bad] if np.ndim(leak) else leak,
                    np.asarray(leak)[bad] if np.ndim(leak) else leak,
                    lam, lam, pol)
                p = p.copy()
                p[bad] = fallback
        else:
            flat_thr = np.broadcast_to(thresholds, np.shape(leak)).ravel()
            flat_leak = np.asarray(leak).ravel()
            p = np.array([model.poisson_tail_kernel(float(b), float(q), float(q),
                                                    float(lam), float(lam), pol)[0]
                          for b, q in zip(flat_thr, flat_leak)])
            p = p.reshape(np.shape(leak))
        out[pol] = p
    return out[Polarity.POSITIVE], out[Polarity.NEGATIVE]


def synth_noise_image(image, params: ModelParams, integration_us: int,
                      seed: int, method: Method = Method.SADDLE,
                      sigma_b: float = None, sigma_x: float = None,
                      roi=None, mapping=None) -> NoiseImage:
    """Generate a synthetic noise image from an 8-bit greyscale array.

    Greyscale maps to lux, lux to mean photon counts; each pixel gets a
    sampled threshold and leakage multiplier; counts are drawn from
    Binomial(integration_us, p_eff) per polarity. ``roi = (width, height)``
    center-crops larger inputs and rejects smaller ones.
    """
    if integration_us < 0:
        raise DomainError("integration_us must be >= 0")
    image = np.asarray(image)
    if image.ndim != 2:
        raise DomainError("image must be 2-D greyscale")
    if roi is not None:
        rw, rh = int(roi[0]), int(roi[1])
        h, w = image.shape
        if w < rw or h < rh:
            raise DomainError(f"image {w}x{h} smaller than ROI {rw}x{rh}")
        x0, y0 = (w - rw) // 2, (h - rh) // 2
        image = image[y0:y0 + rh, x0:x0 + rw]
    height, width = image.shape
    sigma_b = SYNTH_SIGMA_B[method] if sigma_b is None else sigma_b
    sigma_x = SYNTH_SIGMA_X[method] if sigma_x is None else sigma_x
    ensemble = sample_ensemble(width, height, params.threshold, sigma_b,
                               sigma_x, seed)
    lux = greyscale_to_intensity(image, mapping=mapping)
    lam = params.lam_of_lux(lux)
    p_pos, p_neg = _model_probabilities(params, lam, ensemble.thresholds,
                                        ensemble.leak_scale, method)
    eff_pos, eff_neg = effective_probability(p_pos, p_neg, params.refractory_us)
    rng = rng_from_seed(seed, stream=2)
    n = int(integration_us)
    counts_pos = rng.binomial(n, eff_pos) if n > 0 else np.zeros_like(eff_pos, int)
    counts_neg = rng.binomial(n, eff_neg) if n > 0 else np.zeros_like(eff_neg, int)
    prov = {"seed": seed, "method": method.value, "sigma_b": sigma_b,
            "sigma_x": sigma_x, "integration_us": n}
    return NoiseImage(width, height, counts_pos, counts_neg, n, prov)


def synth_recording(intensity_lux: float, params: ModelParams, width: int,
                    height: int, duration_us: int, seed: int,
                    method: Method = Method.SADDLE, sigma_b: float = None,
                    sigma_x: float = None) -> Recording:
    """Generate an event-stream recording of a uniform static scene.

    Each pixel walks its timesteps: while live it fires at most one event per
    timestep (polarities mutually exclusive), then goes blind for the
    refractory time. Implemented by geometric gap sampling, which is
    distributionally identical to the per-timestep walk. Deterministic under
    the seed.
    """
    if duration_us < 1:
        raise DomainError("duration_us must be >= 1")
    sigma_b = SYNTH_SIGMA_B[method] if sigma_b is None else sigma_b
    sigma_x = SYNTH_SIGMA_X[method] if sigma_x is None else sigma_x
    ensemble = sample_ensemble(width, height, params.threshold, sigma_b,
                               sigma_x, seed)
    lam = params.lam_of_lux(intensity_lux)
    p_pos, p_neg = _model_probabilities(params, lam, ensemble.thresholds,
                                        ensemble.leak_scale, method)
    total = np.asarray(p_pos + p_neg, dtype=float).reshape(-1)
    if np.any(total >= 1.0):
        raise DomainError("p_pos + p_neg must be < 1 at every pixel")
    p_pos_flat = np.asarray(p_pos, float).reshape(-1)
    refr = int(round(params.refractory_us))
    rng = rng_from_seed(seed, stream=3)
    n_px = width * height
    idx = np.arange(n_px)
    cur = np.zeros(n_px, dtype=np.int64)
    cur[total <= 0.0] = duration_us  # pixels that can never fire
    xs, ys, ts, ps = [], [], [], []
    while True:
        live = idx[cur < duration_us]
        if live.size == 0:
            break
        gaps = rng.geometric(total[live]) - 1  # failures before first success
        fire_t = cur[live] + gaps
        hit = fire_t < duration_us
        hit_px = live[hit]
        hit_t = fire_t[hit]
        if hit_px.size:
            pol = np.where(rng.random(hit_px.size) * total[hit_px] < p_pos_flat[hit_px],
                           1, -1).astype(np.int8)
            xs.append(hit_px % width)
            ys.append(hit_px // width)
            ts.append(hit_t)
            ps.append(pol)
        nxt = np.full(live.size, duration_us, dtype=np.int64)
        nxt[hit] = fire_t[hit] + refr + 1
        cur[live] = nxt
    if xs:
        x = np.concatenate(xs); y = np.concatenate(ys)
        t = np.concatenate(ts); p = np.concatenate(ps)
        order = np.lexsort((x, y, t))
        x, y, t, p = x[order], y[order], t[order], p[order]
    else:
        x = y = t = np.array([], dtype=np.int64)
        p = np.array([], dtype=np.int8)
    return Recording(x, y, t, p, duration_us=int(duration_us), width=width,
                     height=height, refractory_us=params.refractory_us,
                     intensity_lux=float(intensity_lux))


# ---------------------------------------------------------------------------
# portable greymap I/O
# ---------------------------------------------------------------------------

def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) portable greymap, 8- or 16-bit."""
    data = Path(path).read_bytes()
    if not data.startswith(b"P5"):
        raise FormatError(f"{path}: not a binary PGM (P5)")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    try:
        width, height, maxval = (int(f) for f in fields)
    except ValueError:
        raise FormatError(f"{path}: malformed PGM header") from None
    pos += 1  # single whitespace after maxval
    dtype = np.dtype(">u2") if maxval > 255 else np.uint8
    count = width * height
    raw = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    if raw.size != count:
        raise FormatError(f"{path}: truncated pixel data")
    return raw.reshape(height, width).astype(np.int64)


def write_pgm(path, image: np.ndarray, maxval: int = PGM_MAX16) -> None:
    """Write a binary (P5) PGM; 16-bit big-endian when maxval > 255."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise DomainError("image must be 2-D")
    height, width = image.shape
    header = f"P5\n{width} {height}\n{maxval}\n".encode()
    dtype = np.dtype(">u2") if maxval > 255 else np.uint8
    body = image.astype(dtype).tobytes()
    Path(path).write_bytes(header + body)


def save_noise_image(img: NoiseImage, stem) -> dict:
    """Write <stem>_pos.pgm, <stem>_neg.pgm and a metadata sidecar.

    Counts above the 16-bit greymap ceiling are clamped; clamp totals are
    logged and recorded in the sidecar.
    """
    stem = Path(stem)
    paths = {"pos": stem.with_name(stem.name + "_pos.pgm"),
             "neg": stem.with_name(stem.name + "_neg.pgm"),
             "meta": stem.with_name(stem.name + ".meta")}
    clamped = {}
    for key, counts in (("pos", img.counts_pos), ("neg", img.counts_neg)):
        over = int(np.count_nonzero(counts > PGM_MAX16))
        clamped[key] = over
        if over:
            logger.warning("%d %s counts clamped to %d", over, key, PGM_MAX16)
        write_pgm(paths[key], np.minimum(counts, PGM_MAX16))
    meta = {"width": img.width, "height": img.height,
            "integration_us": img.integration_us,
            "clamped_pos": clamped["pos"], "clamped_neg": clamped["neg"]}
    meta.update({f"prov_{k}": v for k, v in sorted(img.provenance.items())})
    write_key_values(paths["meta"], meta)
    return paths
