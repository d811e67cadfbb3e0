"""Operating regions, the parametric power curve and the method of bins."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .exceptions import ConfigError, EmptyInput, LengthMismatch

DEFAULT_CUT_IN = 3.0
DEFAULT_RATED_SPEED = 13.0
DEFAULT_CUT_OUT = 25.0
DEFAULT_BIN_WIDTH = 0.5


class Region(enum.IntEnum):
    REGION1 = 1
    REGION2 = 2
    REGION3 = 3


@dataclass(frozen=True)
class TurbineSpec:
    """Power-curve geometry: speeds in m/s, rated power in MW.

    Requires ``0 < cut_in < rated_speed < cut_out`` and ``rated_power > 0``.
    """

    cut_in: float = DEFAULT_CUT_IN
    rated_speed: float = DEFAULT_RATED_SPEED
    cut_out: float = DEFAULT_CUT_OUT
    rated_power: float = 1.0

    def __post_init__(self):
        vals = (self.cut_in, self.rated_speed, self.cut_out, self.rated_power)
        if not all(math.isfinite(v) for v in vals):
            raise ConfigError(f"non-finite turbine parameters: {vals}")
        if not 0 < self.cut_in < self.rated_speed < self.cut_out:
            raise ConfigError(
                "need 0 < cut_in < rated_speed < cut_out, got "
                f"{self.cut_in}, {self.rated_speed}, {self.cut_out}"
            )
        if self.rated_power <= 0:
            raise ConfigError(f"rated_power must be > 0, got {self.rated_power}")

    def with_rated_power(self, rated_power: float) -> "TurbineSpec":
        return TurbineSpec(self.cut_in, self.rated_speed, self.cut_out, float(rated_power))


def classify_region(wind_speed, spec: TurbineSpec):
    """Region of a wind speed; boundary speeds belong to Region 2.

    Scalars give a :class:`Region`; arrays give an int array of region codes.
    """
    v = np.asarray(wind_speed, dtype=float)
    codes = np.where(v < spec.cut_in, 1, np.where(v > spec.cut_out, 3, 2))
    if codes.ndim == 0:
        return Region(int(codes))
    return codes


def is_fault(wind_speed, spec: TurbineSpec):
    """1 where the turbine sits in Region 1 or 3, else 0."""
    v = np.asarray(wind_speed, dtype=float)
    label = ((v < spec.cut_in) | (v > spec.cut_out)).astype(np.int64)
    if label.ndim == 0:
        return int(label)
    return label


def ideal_power(wind_speed, spec: TurbineSpec):
    """Ideal power output in MW.

    Zero outside ``[cut_in, cut_out]``, cubic between cut-in and rated
    speed, flat at ``rated_power`` from rated speed to cut-out.
    """
    v = np.asarray(wind_speed, dtype=float)
    ci3 = spec.cut_in ** 3
    ramp = spec.rated_power * (v ** 3 - ci3) / (spec.rated_speed ** 3 - ci3)
    p = np.where(
        (v < spec.cut_in) | (v > spec.cut_out),
        0.0,
        np.where(v >= spec.rated_speed, spec.rated_power, ramp),
    )
    if p.ndim == 0:
        return float(p)
    return p


def max_curve_slope(spec: TurbineSpec) -> float:
    """Largest derivative of the cubic ramp (attained just below rated speed)."""
    ci3 = spec.cut_in ** 3
    return 3.0 * spec.rated_power * spec.rated_speed ** 2 / (spec.rated_speed ** 3 - ci3)


@dataclass(frozen=True)
class CurveBin:
    center: float
    mean_power: float
    count: int


@dataclass(frozen=True)
class BinnedCurve:
    bin_width: float
    bins: tuple[CurveBin, ...]

    @property
    def centers(self) -> np.ndarray:
        return np.array([b.center for b in self.bins])

    @property
    def mean_power(self) -> np.ndarray:
        return np.array([b.mean_power for b in self.bins])

    @property
    def counts(self) -> np.ndarray:
        return np.array([b.count for b in self.bins], dtype=np.int64)


def bin_curve(wind_speed: Iterable[float], power: Iterable[float],
              bin_width: float = DEFAULT_BIN_WIDTH) -> BinnedCurve:
    """Empirical power curve by the method of bins.

    Samples are grouped by ``floor(v / bin_width)``; each non-empty bin
    reports its centre, arithmetic mean power and sample count.
    """
    v = np.asarray(wind_speed, dtype=float).ravel()
    p = np.asarray(power, dtype=float).ravel()
    if v.size == 0:
        raise EmptyInput("bin_curve needs at least one sample")
    if v.shape != p.shape:
        raise LengthMismatch(f"wind speed and power lengths differ: {v.size} vs {p.size}")
    if not bin_width > 0:
        raise ConfigError(f"bin_width must be > 0, got {bin_width}")

    idx = np.floor(v / bin_width).astype(np.int64)
    keys, inverse, counts = np.unique(idx, return_inverse=True, return_counts=True)
    # math.fsum keeps the mean independent of input order
    bins = []
    for k, key in enumerate(keys):
        members = p[inverse == k]
        bins.append(CurveBin(
            center=float((key + 0.5) * bin_width),
            mean_power=math.fsum(members) / int(counts[k]),
            count=int(counts[k]),
        ))
    return BinnedCurve(bin_width=float(bin_width), bins=tuple(bins))
