"""Camera model parameters, enums, and their on-disk key-value format.

A parameter set describes one bias configuration of the sensor: the shared
log-contrast threshold, the lux-to-photon conversion factor, a per-polarity
leakage law, per-polarity additive probability floors, and the refractory
(dead) time. Parameter files are flat ``key = value`` text with the keys
``B, alpha, c1_pos..c3_neg, cv_pos, cv_neg, refractory_us``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .errors import DomainError, FormatError
from .validation import check_finite, check_nonnegative, check_positive

# Intensity span (lux) covered by the bundled default calibration: the darkest
# uniform screen level up to the brightest reference-source level used for the
# bundled S-curve baselines.
OBSERVED_LUX_MIN = 0.15
OBSERVED_LUX_MAX = 300.0

# Photon-count domain over which leakage non-negativity is validated by
# default; covers OBSERVED_LUX_MAX at the default conversion factor with room
# to spare.
DEFAULT_LAMBDA_MAX = 1500.0


class Polarity(enum.Enum):
    """Event polarity: intensity increase (positive) or decrease (negative)."""

    POSITIVE = 1
    NEGATIVE = -1

    @property
    def sign(self) -> int:
        return self.value


class Method(enum.Enum):
    """Which probability formulation to evaluate."""

    POISSON = "poisson"
    GAUSSIAN = "gaussian"
    SADDLE = "saddle"

    @classmethod
    def parse(cls, name: str) -> "Method":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise DomainError(f"unknown method {name!r}; expected one of "
                              f"{[m.value for m in cls]}") from None


@dataclass(frozen=True)
class LeakageCoefficients:
    """Coefficients of the intensity-dependent leakage law.

    leak(lam) = offset + shot * sqrt(lam) + linear * lam

    ``offset`` is a photon-count offset present even in darkness, ``shot``
    couples to photon shot noise (per sqrt photon), and ``linear`` is a
    brightness-proportional term (dimensionless). ``linear`` may be negative
    as long as the law stays non-negative over the validated domain.
    """

    offset: float
    shot: float
    linear: float

    def __post_init__(self):
        check_nonnegative("offset (c1)", self.offset)
        check_nonnegative("shot (c2)", self.shot)
        check_finite("linear (c3)", self.linear)

    def evaluate(self, lam):
        """Leakage photon count at mean photon count ``lam`` (array ok)."""
        import numpy as np

        lam = np.asarray(lam, dtype=float)
        if np.any(lam < 0):
            raise DomainError("mean photon count must be >= 0")
        out = self.offset + self.shot * np.sqrt(lam) + self.linear * lam
        return float(out) if out.ndim == 0 else out

    def validate_domain(self, lambda_max: float) -> None:
        """Reject coefficient sets that go negative on [0, lambda_max].

        With offset, shot >= 0 the law is a parabola in sqrt(lam) that can
        only dip below zero at the right endpoint when ``linear`` < 0, so
        checking the endpoint suffices.
        """
        check_positive("lambda_max", lambda_max)
        end = self.offset + self.shot * math.sqrt(lambda_max) + self.linear * lambda_max
        if end < 0:
            raise DomainError(
                f"leakage law {self} is negative at lambda={lambda_max:g} "
                f"(value {end:g}); shrink lambda_max or fix coefficients")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.offset, self.shot, self.linear)


@dataclass(frozen=True)
class ModelParams:
    """Full parameter set for one bias configuration.

    threshold      shared log-contrast threshold, 0 < threshold <= 1
    alpha          photons per lux per microsecond timestep, > 0
    leak_pos/neg   per-polarity leakage coefficients
    floor_pos/neg  additive probability floors in [0, 1)
    refractory_us  dead time after an event, microseconds, >= 0
    lambda_max     photon-count domain over which leakage laws are validated
    """

    threshold: float
    alpha: float
    leak_pos: LeakageCoefficients
    leak_neg: LeakageCoefficients
    floor_pos: float = 0.0
    floor_neg: float = 0.0
    refractory_us: float = 0.0
    lambda_max: float = field(default=DEFAULT_LAMBDA_MAX)

    def __post_init__(self):
        check_finite("threshold (B)", self.threshold)
        if not 0.0 < self.threshold <= 1.0:
            raise DomainError(f"threshold must be in (0, 1], got {self.threshold!r}")
        check_positive("alpha", self.alpha)
        for name, v in (("floor_pos", self.floor_pos), ("floor_neg", self.floor_neg)):
            check_finite(name, v)
            if not 0.0 <= v < 1.0:
                raise DomainError(f"{name} must be in [0, 1), got {v!r}")
        check_nonnegative("refractory_us", self.refractory_us)
        self.leak_pos.validate_domain(self.lambda_max)
        self.leak_neg.validate_domain(self.lambda_max)

    def leak(self, polarity: Polarity) -> LeakageCoefficients:
        return self.leak_pos if polarity is Polarity.POSITIVE else self.leak_neg

    def floor(self, polarity: Polarity) -> float:
        return self.floor_pos if polarity is Polarity.POSITIVE else self.floor_neg

    def lam_of_lux(self, lux):
        """Mean photon count per timestep at scene illuminance ``lux``."""
        import numpy as np

        lux = np.asarray(lux, dtype=float)
        if np.any(lux < 0):
            raise DomainError("illuminance must be >= 0")
        out = self.alpha * lux
        return float(out) if out.ndim == 0 else out

    def with_floors(self, floor_pos: float, floor_neg: float) -> "ModelParams":
        return replace(self, floor_pos=floor_pos, floor_neg=floor_neg)


@dataclass(frozen=True)
class IntensityPair:
    """Current and reference mean photon counts (photons per timestep)."""

    lam: float
    lam0: float

    def __post_init__(self):
        check_nonnegative("lam", self.lam)
        check_nonnegative("lam0", self.lam0)

    @classmethod
    def static(cls, lam: float) -> "IntensityPair":
        """Static-scene pair: no intensity change."""
        return cls(lam, lam)

    @property
    def is_static(self) -> bool:
        return self.lam == self.lam0


@dataclass(frozen=True)
class ProbResult:
    """A probability with its evaluation method and truncation bound.

    ``truncation_error`` bounds the neglected tail mass of the exact Poisson
    evaluation; it is 0 for the closed-form approximations.
    """

    value: float
    method: Method
    truncation_error: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise DomainError(f"probability out of range: {self.value!r}")
        if self.truncation_error < 0:
            raise DomainError("truncation_error must be >= 0")


# ---------------------------------------------------------------------------
# key-value text files
# ---------------------------------------------------------------------------

def read_key_values(path) -> dict[str, str]:
    """Parse ``key = value`` text; '#' starts a comment; blank lines ignored."""
    out: dict[str, str] = {}
    path = Path(path)
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def write_key_values(path, items: dict) -> None:
    path = Path(path)
    lines = [f"{k} = {v}" for k, v in items.items()]
    path.write_text("\n".join(lines) + "\n")


_PARAM_KEYS = ("B", "alpha", "c1_pos", "c2_pos", "c3_pos", "c1_neg", "c2_neg",
               "c3_neg", "cv_pos", "cv_neg", "refractory_us")


def params_to_dict(params: ModelParams) -> dict[str, str]:
    p, n = params.leak_pos, params.leak_neg
    return {
        "B": repr(params.threshold),
        "alpha": repr(params.alpha),
        "c1_pos": repr(p.offset), "c2_pos": repr(p.shot), "c3_pos": repr(p.linear),
        "cv_pos": repr(params.floor_pos),
        "c1_neg": repr(n.offset), "c2_neg": repr(n.shot), "c3_neg": repr(n.linear),
        "cv_neg": repr(params.floor_neg),
        "refractory_us": repr(params.refractory_us),
        "lambda_max": repr(params.lambda_max),
    }


def params_from_dict(kv: dict[str, str], source: str = "<params>") -> ModelParams:
    missing = [k for k in _PARAM_KEYS if k not in kv]
    if missing:
        raise FormatError(f"{source}: missing keys {missing}")
    try:
        vals = {k: float(kv[k]) for k in _PARAM_KEYS}
        lambda_max = float(kv.get("lambda_max", DEFAULT_LAMBDA_MAX))
    except ValueError as exc:
        raise FormatError(f"{source}: {exc}") from None
    return ModelParams(
        threshold=vals["B"],
        alpha=vals["alpha"],
        leak_pos=LeakageCoefficients(vals["c1_pos"], vals["c2_pos"], vals["c3_pos"]),
        leak_neg=LeakageCoefficients(vals["c1_neg"], vals["c2_neg"], vals["c3_neg"]),
        floor_pos=vals["cv_pos"],
        floor_neg=vals["cv_neg"],
        refractory_us=vals["refractory_us"],
        lambda_max=lambda_max,
    )


def load_params(path) -> ModelParams:
    return params_from_dict(read_key_values(path), source=str(path))


def save_params(path, params: ModelParams) -> None:
    write_key_values(path, params_to_dict(params))


# ---------------------------------------------------------------------------
# bundled presets
# ---------------------------------------------------------------------------

def _data_path(name: str):
    return resources.files("evnoise.data").joinpath(name)


def default_params() -> ModelParams:
    """Calibrated default-bias parameter set."""
    with resources.as_file(_data_path("default.params")) as p:
        return load_params(p)


def load_params_set(path=None) -> dict[tuple[int, int], ModelParams]:
    """Load the bundled per-(bias_fo, bias_hpf) coefficient presets.

    Rows share the default threshold/alpha/refractory values; only leakage
    coefficients and floors vary. Returns a dict keyed by (bias_fo, bias_hpf).
    """
    if path is None:
        with resources.as_file(_data_path("table_s2.params_set")) as p:
            return load_params_set(p)
    path = Path(path)
    out: dict[tuple[int, int], ModelParams] = {}
    header = None
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        cells = [c.strip() for c in line.split(",")]
        if header is None:
            header = cells
            expected = ["bias_fo", "bias_hpf", "c1_pos", "c2_pos", "c3_pos",
                        "cv_pos", "c1_neg", "c2_neg", "c3_neg", "cv_neg"]
            if header != expected:
                raise FormatError(f"{path}:{lineno}: bad header {header}")
            continue
        if len(cells) != 10:
            raise FormatError(f"{path}:{lineno}: expected 10 columns, got {len(cells)}")
        try:
            fo, hpf = int(cells[0]), int(cells[1])
            nums = [float(c) for c in cells[2:]]
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
        out[(fo, hpf)] = ModelParams(
            threshold=0.15,
            alpha=4.5,
            leak_pos=LeakageCoefficients(nums[0], nums[1], nums[2]),
            floor_pos=nums[3],
            leak_neg=LeakageCoefficients(nums[4], nums[5], nums[6]),
            floor_neg=nums[7],
            refractory_us=79.0,
        )
    if not out:
        raise FormatError(f"{path}: no rows")
    return out


def default_noise_curve_path():
    """Path to the bundled default-bias reference noise curve CSV."""
    return _data_path("default_noise_curve.csv")
