"""Meteorological data ingestion, normalisation, splitting and synthesis.

Feature order is frozen (see :data:`FEATURE_NAMES`)::

    month, day, hour, minute, wind_speed, air_temperature,
    air_pressure, wind_direction, density

The default CSV schema follows the NREL WIND Toolkit site export, whose
column names are listed in :data:`DEFAULT_SCHEMA`.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, fields
from datetime import datetime, timedelta

import numpy as np
from scipy.special import ndtr
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import (
    BadFractions,
    DegenerateColumn,
    EmptyFile,
    InsufficientData,
    LengthMismatch,
    MissingColumn,
    ParseError,
)
from .powercurve import TurbineSpec, ideal_power, is_fault

logger = logging.getLogger(__name__)

FEATURE_NAMES = (
    "month",
    "day",
    "hour",
    "minute",
    "wind_speed",
    "air_temperature",
    "air_pressure",
    "wind_direction",
    "density",
)
N_FEATURES = len(FEATURE_NAMES)
WIND_SPEED_COL = FEATURE_NAMES.index("wind_speed")

DEFAULT_SCHEMA = {
    "month": "Month",
    "day": "Day",
    "hour": "Hour",
    "minute": "Minute",
    "wind_speed": "wind speed at 100m (m/s)",
    "air_temperature": "air temperature at 100m (K)",
    "air_pressure": "air pressure at 100m (Pa)",
    "wind_direction": "wind direction at 100m (deg)",
    "density": "density at hub height (kg/m^3)",
    "power": "power (MW)",
}

TRAIN, VAL, TEST = "Train", "Val", "Test"
SPLIT_TAGS = (TRAIN, VAL, TEST)
RANDOM, CHRONOLOGICAL = "random", "chronological"

SITE_YEAR_SAMPLES = 29_736


@dataclass(frozen=True)
class MetRecord:
    month: int
    day: int
    hour: int
    minute: int
    wind_speed: float
    air_temperature: float
    air_pressure: float
    wind_direction: float
    density: float
    power: float

    def features(self) -> tuple[float, ...]:
        return tuple(float(getattr(self, name)) for name in FEATURE_NAMES)


_INT_FIELDS = {"month": (1, 12), "day": (1, 31), "hour": (0, 23), "minute": (0, 59)}
_RECORD_FIELDS = tuple(f.name for f in fields(MetRecord))


def _make_record(raw: dict[str, str]) -> MetRecord:
    """Parse and validate one row; raises ValueError with a short reason."""
    values = {}
    for name in _RECORD_FIELDS:
        text = raw[name].strip()
        x = float(text)
        if not math.isfinite(x):
            raise ValueError(f"{name} is not finite ({text!r})")
        if name in _INT_FIELDS:
            lo, hi = _INT_FIELDS[name]
            if x != int(x) or not lo <= x <= hi:
                raise ValueError(f"{name}={text!r} outside {lo}..{hi}")
            x = int(x)
        values[name] = x
    if values["wind_speed"] < 0:
        raise ValueError(f"negative wind speed {values['wind_speed']}")
    if values["power"] < 0:
        raise ValueError(f"negative power {values['power']}")
    for name in ("air_temperature", "air_pressure", "density"):
        if values[name] <= 0:
            raise ValueError(f"{name} must be positive, got {values[name]}")
    values["wind_direction"] = values["wind_direction"] % 360.0
    return MetRecord(**values)


def ingest_csv(path, schema: dict[str, str] | None = None, strict: bool = True,
               skip_rows: int = 0, return_skipped: bool = False):
    """Read a comma-separated met/power file into :class:`MetRecord` objects.

    ``schema`` maps record field names to column headers (missing keys fall
    back to :data:`DEFAULT_SCHEMA`). ``skip_rows`` drops metadata lines above
    the header. In strict mode the first bad row raises :class:`ParseError`;
    otherwise bad rows are skipped and counted.
    """
    mapping = dict(DEFAULT_SCHEMA)
    if schema:
        mapping.update(schema)

    with open(path, newline="", encoding="utf-8") as fh:
        for _ in range(skip_rows):
            fh.readline()
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyFile(f"{path}: no header row")
        header = [h.strip() for h in header]
        missing = [f"{k} ({v!r})" for k, v in mapping.items() if v not in header]
        if missing:
            raise MissingColumn(f"{path}: missing columns {', '.join(missing)}")
        col = {k: header.index(v) for k, v in mapping.items()}

        records = []
        skipped = 0
        # row numbers are 1-based file lines, header included
        first_line = skip_rows + 2
        for lineno, row in enumerate(reader, start=first_line):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                raw = {k: row[i] for k, i in col.items()}
                records.append(_make_record(raw))
            except (ValueError, IndexError) as exc:
                if strict:
                    raise ParseError(lineno, str(exc) or "short row") from None
                skipped += 1

    if not records and skipped == 0:
        raise EmptyFile(f"{path}: no data rows")
    if skipped:
        logger.warning("%s: skipped %d unparseable rows", path, skipped)
    if return_skipped:
        return records, skipped
    return records


def write_records_csv(records, path, schema: dict[str, str] | None = None) -> None:
    """Write records in the ingest schema, floats at full precision."""
    mapping = dict(DEFAULT_SCHEMA)
    if schema:
        mapping.update(schema)
    names = list(_RECORD_FIELDS)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([mapping[n] for n in names])
        for r in records:
            w.writerow([repr(getattr(r, n)) for n in names])


def records_to_arrays(records) -> tuple[np.ndarray, np.ndarray]:
    """Feature matrix (n, 9) and power vector (n,) from records."""
    if len(records) == 0:
        return np.empty((0, N_FEATURES)), np.empty(0)
    X = np.array([r.features() for r in records], dtype=float)
    y = np.array([r.power for r in records], dtype=float)
    return X, y


@dataclass(frozen=True)
class NormalizationStats:
    """Per-feature mean/std and power min/max, all from the training split."""

    mean: tuple[float, ...]
    std: tuple[float, ...]
    power_min: float
    power_max: float

    def to_dict(self) -> dict:
        return {
            "mean": list(self.mean),
            "std": list(self.std),
            "power_min": self.power_min,
            "power_max": self.power_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationStats":
        return cls(tuple(map(float, d["mean"])), tuple(map(float, d["std"])),
                   float(d["power_min"]), float(d["power_max"]))


class MetNormalizer(TransformerMixin, BaseEstimator):
    """Z-score the features and min-max scale power to [0, 1].

    ``fit`` must only ever see training rows. ``transform`` handles the
    features; the ``*_target`` methods handle power.
    """

    def fit(self, X, y):
        X = check_array(X, dtype=float)
        y = check_array(y, dtype=float, ensure_2d=False)
        if X.shape[0] != y.shape[0]:
            raise LengthMismatch(f"{X.shape[0]} feature rows vs {y.shape[0]} targets")
        if X.shape[0] < 2:
            raise InsufficientData(f"need >= 2 training rows, got {X.shape[0]}")
        self.mean_ = X.mean(axis=0)
        self.scale_ = X.std(axis=0)
        constant = np.flatnonzero(self.scale_ == 0)
        if constant.size:
            names = [FEATURE_NAMES[i] if X.shape[1] == N_FEATURES else str(i) for i in constant]
            raise DegenerateColumn(f"constant training column(s): {', '.join(names)}")
        self.power_min_ = float(y.min())
        self.power_max_ = float(y.max())
        if self.power_max_ == self.power_min_:
            raise DegenerateColumn("constant training power")
        self.n_features_in_ = X.shape[1]
        return self

    @classmethod
    def from_stats(cls, stats: NormalizationStats) -> "MetNormalizer":
        obj = cls()
        obj.mean_ = np.array(stats.mean)
        obj.scale_ = np.array(stats.std)
        obj.power_min_ = stats.power_min
        obj.power_max_ = stats.power_max
        obj.n_features_in_ = len(stats.mean)
        return obj

    @property
    def stats_(self) -> NormalizationStats:
        check_is_fitted(self, "mean_")
        return NormalizationStats(tuple(map(float, self.mean_)), tuple(map(float, self.scale_)),
                                  self.power_min_, self.power_max_)

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = check_array(X, dtype=float)
        return (X - self.mean_) / self.scale_

    def inverse_transform(self, X):
        check_is_fitted(self, "mean_")
        X = check_array(X, dtype=float)
        return X * self.scale_ + self.mean_

    def transform_target(self, y):
        check_is_fitted(self, "power_min_")
        y = np.asarray(y, dtype=float)
        return (y - self.power_min_) / (self.power_max_ - self.power_min_)

    def inverse_transform_target(self, y):
        check_is_fitted(self, "power_min_")
        y = np.asarray(y, dtype=float)
        return y * (self.power_max_ - self.power_min_) + self.power_min_


def normalize(records, train_mask):
    """Normalise records with statistics from the rows selected by ``train_mask``.

    Returns ``(features, power_target, stats)``. Training-row power lands in
    [0, 1]; other rows may fall slightly outside.
    """
    X, y = records_to_arrays(records)
    mask = np.asarray(train_mask, dtype=bool)
    if mask.shape != (len(records),):
        raise LengthMismatch(f"train_mask has {mask.size} entries for {len(records)} records")
    if mask.sum() < 2:
        raise InsufficientData(f"train split selects {int(mask.sum())} rows, need >= 2")
    norm = MetNormalizer().fit(X[mask], y[mask])
    return norm.transform(X), norm.transform_target(y), norm.stats_


def denormalize(features, power_target, stats: NormalizationStats):
    norm = MetNormalizer.from_stats(stats)
    return norm.inverse_transform(features), norm.inverse_transform_target(power_target)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_counts(n: int, fractions) -> tuple[int, int, int]:
    """Validation and test get ``round(n * f)``; training takes the remainder."""
    if len(fractions) != 3:
        raise BadFractions(f"need three fractions, got {fractions!r}")
    f_train, f_val, f_test = (float(f) for f in fractions)
    if min(f_train, f_val, f_test) < 0 or f_train <= 0:
        raise BadFractions(f"fractions must be non-negative with train > 0: {fractions!r}")
    if abs(f_train + f_val + f_test - 1.0) > 1e-9:
        raise BadFractions(f"fractions sum to {f_train + f_val + f_test!r}, not 1")
    n_val = min(_round_half_up(n * f_val), n)
    n_test = min(_round_half_up(n * f_test), n - n_val)
    return n - n_val - n_test, n_val, n_test


def split_dataset(n: int, fractions=(0.7, 0.15, 0.15), seed: int = 42,
                  mode: str = RANDOM) -> np.ndarray:
    """Tag ``n`` samples as Train/Val/Test.

    Random mode shuffles with a seeded permutation. Chronological mode hands
    out contiguous index ranges in order (Train first, Test last).
    """
    n_train, n_val, _ = split_counts(n, fractions)
    tags = np.empty(n, dtype="<U5")
    if mode == RANDOM:
        order = np.random.default_rng(seed).permutation(n)
    elif mode == CHRONOLOGICAL:
        order = np.arange(n)
    else:
        raise BadFractions(f"unknown split mode {mode!r}")
    tags[order[:n_train]] = TRAIN
    tags[order[n_train:n_train + n_val]] = VAL
    tags[order[n_train + n_val:]] = TEST
    return tags


@dataclass(frozen=True)
class LabeledDataset:
    """Normalised features, targets and split tags in chronological order."""

    features: np.ndarray
    power_target: np.ndarray
    fault_label: np.ndarray
    split_tag: np.ndarray
    stats: NormalizationStats
    chronological_index: np.ndarray

    def __post_init__(self):
        n = self.features.shape[0]
        lengths = {len(self.power_target), len(self.fault_label), len(self.split_tag),
                   len(self.chronological_index)}
        if self.features.ndim != 2 or self.features.shape[1] != N_FEATURES or lengths != {n}:
            raise LengthMismatch("dataset columns disagree in length or width")
        for arr in (self.features, self.power_target, self.fault_label,
                    self.split_tag, self.chronological_index):
            arr.setflags(write=False)

    def __len__(self):
        return self.features.shape[0]

    def mask(self, tag: str) -> np.ndarray:
        return self.split_tag == tag

    def split(self, tag: str):
        """``(features, power_target, fault_label)`` of one split."""
        m = self.mask(tag)
        return self.features[m], self.power_target[m], self.fault_label[m]

    def wind_speed(self) -> np.ndarray:
        """Physical wind speed (m/s) recovered from the normalised column."""
        return self.features[:, WIND_SPEED_COL] * self.stats.std[WIND_SPEED_COL] \
            + self.stats.mean[WIND_SPEED_COL]

    def power(self) -> np.ndarray:
        """Physical power (MW)."""
        return MetNormalizer.from_stats(self.stats).inverse_transform_target(self.power_target)


def build_labeled_dataset(records, spec: TurbineSpec, fractions=(0.7, 0.15, 0.15),
                          seed: int = 42, mode: str = RANDOM) -> LabeledDataset:
    """Split, normalise and fault-label records kept in file (time) order."""
    n = len(records)
    tags = split_dataset(n, fractions, seed, mode)
    feats, target, stats = normalize(records, tags == TRAIN)
    labels = is_fault(np.array([r.wind_speed for r in records], dtype=float), spec)
    return LabeledDataset(feats, target, np.asarray(labels, dtype=np.int64), tags, stats,
                          np.arange(n, dtype=np.int64))


def train_rated_power(records, split_tag) -> float:
    """Largest power observed in the training split (default rated power)."""
    powers = [r.power for r, t in zip(records, split_tag) if t == TRAIN]
    return max(powers) if powers else 0.0


DATASET_COLUMNS = FEATURE_NAMES + ("power_target", "fault_label", "split_tag")


def write_dataset_csv(ds: LabeledDataset, path) -> None:
    """Canonical dataset file; row order is the chronological index."""
    order = np.argsort(ds.chronological_index, kind="stable")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DATASET_COLUMNS)
        for i in order:
            w.writerow([repr(float(x)) for x in ds.features[i]]
                       + [repr(float(ds.power_target[i])), str(int(ds.fault_label[i])),
                          str(ds.split_tag[i])])


def read_dataset_csv(path, stats: NormalizationStats) -> LabeledDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyFile(f"{path}: empty dataset file")
        if tuple(header) != DATASET_COLUMNS:
            raise MissingColumn(f"{path}: unexpected dataset header {header}")
        feats, target, label, tags = [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            try:
                feats.append([float(x) for x in row[:N_FEATURES]])
                target.append(float(row[N_FEATURES]))
                label.append(int(row[N_FEATURES + 1]))
                tag = row[N_FEATURES + 2]
                if tag not in SPLIT_TAGS:
                    raise ValueError(f"bad split tag {tag!r}")
                tags.append(tag)
            except (ValueError, IndexError) as exc:
                raise ParseError(lineno, str(exc)) from None
    if not feats:
        raise EmptyFile(f"{path}: no dataset rows")
    n = len(feats)
    return LabeledDataset(np.array(feats), np.array(target), np.array(label, dtype=np.int64),
                          np.array(tags, dtype="<U5"), stats, np.arange(n, dtype=np.int64))


# --- synthetic data -------------------------------------------------------

WEIBULL_SHAPE = 2.0
WEIBULL_SCALE = 8.5
GAS_CONSTANT_DRY_AIR = 287.05


def _weibull_cdf(v):
    return 1.0 - np.exp(-(np.asarray(v, dtype=float) / WEIBULL_SCALE) ** WEIBULL_SHAPE)


def _weibull_ppf(u):
    u = np.clip(u, 0.0, np.nextafter(1.0, 0.0))
    return WEIBULL_SCALE * (-np.log1p(-u)) ** (1.0 / WEIBULL_SHAPE)


def _speeds_from_uniform(u, spec: TurbineSpec, fault_fraction: float, region3_share: float):
    """Monotone map from U(0,1) to wind speed with a Weibull shape per region.

    The lowest ``fault_fraction * (1 - region3_share)`` of the unit interval
    lands below cut-in, the top ``fault_fraction * region3_share`` above
    cut-out; inside each segment speeds follow the truncated Weibull law.
    """
    a = fault_fraction * (1.0 - region3_share)
    b = 1.0 - fault_fraction * region3_share
    f_in, f_out = _weibull_cdf(spec.cut_in), _weibull_cdf(spec.cut_out)
    v = np.empty_like(u)

    low = u < a
    mid = (u >= a) & (u < b)
    high = u >= b
    if low.any():
        v[low] = np.minimum(_weibull_ppf(f_in * u[low] / a), np.nextafter(spec.cut_in, 0.0))
    if mid.any():
        frac = (u[mid] - a) / (b - a)
        v[mid] = np.clip(_weibull_ppf(f_in + (f_out - f_in) * frac), spec.cut_in, spec.cut_out)
    if high.any():
        frac = (u[high] - b) / (1.0 - b)
        v[high] = np.maximum(_weibull_ppf(f_out + (1.0 - f_out) * frac),
                             np.nextafter(spec.cut_out, np.inf))
    return v


def synth_dataset(spec: TurbineSpec, n: int, noise_sigma: float = 0.0,
                  fault_fraction: float = 0.1, seed: int = 0, autocorrelation: float = 0.0,
                  region3_share: float = 0.25) -> list[MetRecord]:
    """Seeded synthetic turbine records.

    Wind speed is drawn through a Gaussian copula: a latent AR(1) series
    with lag-one correlation ``autocorrelation`` (0 gives i.i.d. draws) is
    mapped to speeds so that a ``fault_fraction`` share falls outside
    ``[cut_in, cut_out]``. Power is ``ideal_power(v)`` plus Gaussian noise
    with standard deviation ``noise_sigma * rated_power``, clipped at 0.
    Timestamps advance at a fixed cadence from 2012-01-01 spread across the
    year; temperature, pressure and direction come from fixed plausible
    ranges and density follows the ideal-gas law.
    """
    if n < 1:
        raise InsufficientData("synth_dataset needs n >= 1")
    if not 0.0 <= fault_fraction <= 1.0:
        raise BadFractions(f"fault_fraction must lie in [0, 1], got {fault_fraction}")
    if not -1.0 < autocorrelation < 1.0:
        raise BadFractions(f"autocorrelation must lie in (-1, 1), got {autocorrelation}")
    rng = np.random.default_rng(seed)

    eps = rng.standard_normal(n)
    z = np.empty(n)
    z[0] = eps[0]
    innov = math.sqrt(1.0 - autocorrelation ** 2)
    for t in range(1, n):
        z[t] = autocorrelation * z[t - 1] + innov * eps[t]
    speed = _speeds_from_uniform(ndtr(z), spec, fault_fraction, region3_share)

    noise = rng.standard_normal(n) * (noise_sigma * spec.rated_power)
    power = np.maximum(ideal_power(speed, spec) + noise, 0.0)

    cadence = 10 * max(1, (366 * 144) // n)
    start = datetime(2012, 1, 1)
    stamps = [start + timedelta(minutes=cadence * i) for i in range(n)]
    doy = np.array([s.timetuple().tm_yday for s in stamps], dtype=float)
    hour = np.array([s.hour + s.minute / 60.0 for s in stamps])
    temperature = (283.0 - 10.0 * np.cos(2 * np.pi * (doy - 15) / 366)
                   - 4.0 * np.cos(2 * np.pi * (hour - 3) / 24) + rng.normal(0.0, 1.5, n))
    pressure = rng.normal(90_000.0, 800.0, n)
    direction = rng.uniform(0.0, 360.0, n)
    density = pressure / (GAS_CONSTANT_DRY_AIR * temperature)

    return [
        MetRecord(s.month, s.day, s.hour, s.minute, float(speed[i]), float(temperature[i]),
                  float(pressure[i]), float(direction[i]), float(density[i]), float(power[i]))
        for i, s in enumerate(stamps)
    ]


def surrogate_records(seed: int = 2012, n: int = SITE_YEAR_SAMPLES) -> list[MetRecord]:
    """Stand-in for the NREL 2012 site file: 29,736 rows at 10-minute cadence.

    Persistent wind (lag-one correlation 0.995), 12 % fault share, 3 MW
    rating and 3 % measurement noise.
    """
    spec = TurbineSpec(rated_power=3.0)
    return synth_dataset(spec, n, noise_sigma=0.03, fault_fraction=0.12, seed=seed,
                         autocorrelation=0.995)


def atomic_write_text(path, text: str) -> None:
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)
