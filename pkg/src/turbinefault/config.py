"""Run configuration: an INI file plus ``section.key=value`` overrides.

Precedence, lowest first: built-in defaults, the config file, the
``TURBINEFAULT_OUTPUT_DIR`` environment variable (output directory only),
then command-line overrides. See ``README.md`` for every key.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .dataio import DEFAULT_SCHEMA, RANDOM, CHRONOLOGICAL, split_counts
from .exceptions import ConfigError, DataError, TurbineFaultError
from .neuralnet.model import ArchKind, DEFAULTS as ARCH_DEFAULTS, resolve_options
from .neuralnet.training import TrainConfig
from .powercurve import DEFAULT_BIN_WIDTH, TurbineSpec
from .svr import MEDIUM_KERNEL_SCALE, GaussianSVR

OUTPUT_ENV = "TURBINEFAULT_OUTPUT_DIR"
TRAIN_KEYS = ("max_epochs", "patience", "learning_rate", "momentum", "batch_size", "seed")
ALL_ARCHS = tuple(k.value for k in ArchKind)


@dataclass
class RunConfig:
    data_path: str | None = None
    skip_rows: int = 0
    strict: bool = True
    schema: dict = field(default_factory=lambda: dict(DEFAULT_SCHEMA))
    cut_in: float = 3.0
    rated_speed: float = 13.0
    cut_out: float = 25.0
    rated_power: float | None = None  # None: largest training-split power
    bin_width: float = DEFAULT_BIN_WIDTH
    fractions: tuple = (0.7, 0.15, 0.15)
    split_mode: str = RANDOM
    split_seed: int = 42
    svr: dict = field(default_factory=lambda: {
        "C": 1.0, "epsilon": None, "kernel_scale": MEDIUM_KERNEL_SCALE, "tol": 1e-3,
        "max_passes": 10_000, "random_state": 0})
    cv_folds: int = 0
    nn_train: dict = field(default_factory=lambda: asdict(TrainConfig()))
    archs: tuple = ALL_ARCHS
    arch_train: dict = field(default_factory=dict)
    arch_options: dict = field(default_factory=dict)
    output_dir: str = "runs"

    def turbine(self, rated_power: float | None = None) -> TurbineSpec:
        rp = self.rated_power if rated_power is None else rated_power
        return TurbineSpec(self.cut_in, self.rated_speed, self.cut_out,
                           1.0 if rp is None else rp)

    def train_config(self, arch: str) -> TrainConfig:
        merged = dict(self.nn_train)
        merged.update(self.arch_train.get(arch, {}))
        return TrainConfig(**merged)

    def svr_estimator(self) -> GaussianSVR:
        return GaussianSVR(**self.svr)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fractions"] = list(self.fractions)
        d["archs"] = list(self.archs)
        return d

    def config_hash(self) -> str:
        """SHA-256 of every setting except the output directory."""
        d = self.to_dict()
        d.pop("output_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    def validate(self, require_data: bool = True) -> "RunConfig":
        """Check everything up front; raises ConfigError (or DataError for a missing file)."""
        try:
            self.turbine()
            if self.rated_power is not None and not self.rated_power > 0:
                raise ConfigError("rated_power must be > 0")
            if not self.bin_width > 0:
                raise ConfigError("bin_width must be > 0")
            split_counts(100, self.fractions)
            if self.split_mode not in (RANDOM, CHRONOLOGICAL):
                raise ConfigError(f"split mode must be random or chronological, "
                                  f"got {self.split_mode!r}")
            self.svr_estimator()._check_params()
            if self.cv_folds == 1 or self.cv_folds < 0:
                raise ConfigError("cv_folds must be 0 (skip) or >= 2")
            for arch in self.archs:
                if arch not in ALL_ARCHS:
                    raise ConfigError(f"unknown architecture {arch!r}")
                self.train_config(arch)
                resolve_options(ArchKind(arch), self.arch_options.get(arch))
            if self.skip_rows < 0:
                raise ConfigError("skip_rows must be >= 0")
        except ConfigError:
            raise
        except (TurbineFaultError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if require_data:
            if not self.data_path:
                raise ConfigError("no dataset path configured ([data] path)")
            if not Path(self.data_path).is_file():
                raise DataError(f"dataset file not found: {self.data_path}")
        return self


def _parse_value(text: str):
    t = text.strip()
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("auto", "none", ""):
        return None
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        return t


def _int_tuple(text):
    if isinstance(text, int):
        return text
    parts = [p for p in str(text).replace(",", " ").split() if p]
    return tuple(int(p) for p in parts) if len(parts) > 1 else int(parts[0])


def _apply(cfg: RunConfig, section: str, key: str, raw: str, base_dir: Path) -> None:
    v = _parse_value(raw)
    s, k = section.lower(), key.strip()
    try:
        if s == "data":
            if k == "path":
                p = Path(raw.strip())
                cfg.data_path = str(p if p.is_absolute() else base_dir / p)
            elif k == "skip_rows":
                cfg.skip_rows = int(v)
            elif k == "strict":
                cfg.strict = bool(v)
            else:
                raise KeyError(k)
        elif s == "schema":
            if k not in DEFAULT_SCHEMA:
                raise KeyError(k)
            cfg.schema[k] = raw.strip()
        elif s == "turbine":
            if k in ("cut_in", "rated_speed", "cut_out", "bin_width"):
                setattr(cfg, k, float(v))
            elif k == "rated_power":
                cfg.rated_power = None if v is None else float(v)
            else:
                raise KeyError(k)
        elif s == "split":
            idx = {"train": 0, "val": 1, "test": 2}
            if k in idx:
                fr = list(cfg.fractions)
                fr[idx[k]] = float(v)
                cfg.fractions = tuple(fr)
            elif k == "mode":
                cfg.split_mode = str(v).lower()
            elif k == "seed":
                cfg.split_seed = int(v)
            else:
                raise KeyError(k)
        elif s == "svr":
            mapping = {"c": "C", "epsilon": "epsilon", "kernel_scale": "kernel_scale",
                       "tol": "tol", "max_passes": "max_passes", "seed": "random_state"}
            if k.lower() == "cv_folds":
                cfg.cv_folds = int(v)
            elif k.lower() in mapping:
                name = mapping[k.lower()]
                if name in ("max_passes", "random_state"):
                    v = int(v)
                elif v is not None:
                    v = float(v)
                cfg.svr[name] = v
            else:
                raise KeyError(k)
        elif s == "nn":
            if k == "archs":
                cfg.archs = tuple(a.strip() for a in raw.split(",") if a.strip())
            elif k in TRAIN_KEYS:
                cfg.nn_train[k] = v
            else:
                raise KeyError(k)
        elif s.startswith("nn."):
            arch = s[3:]
            if arch not in ALL_ARCHS:
                raise ConfigError(f"unknown architecture section [{section}]")
            if k in TRAIN_KEYS:
                cfg.arch_train.setdefault(arch, {})[k] = v
            elif k in ARCH_DEFAULTS[ArchKind(arch)]:
                if k == "hidden" and arch == "ff":
                    v = _int_tuple(raw)
                cfg.arch_options.setdefault(arch, {})[k] = v
            else:
                raise KeyError(k)
        elif s == "output":
            if k == "dir":
                cfg.output_dir = raw.strip()
            else:
                raise KeyError(k)
        else:
            raise ConfigError(f"unknown config section [{section}]")
    except KeyError:
        raise ConfigError(f"unknown key {key!r} in [{section}]") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from None


def load_config(path=None, overrides=(), env=None) -> RunConfig:
    """Build a :class:`RunConfig` from defaults, an INI file, the environment and overrides.

    ``overrides`` are ``"section.key=value"`` strings; the section may itself
    contain a dot (``nn.rnn.hidden=64``).
    """
    env = os.environ if env is None else env
    cfg = RunConfig()
    base_dir = Path(".")
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        parser.optionxform = str
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        base_dir = path.parent
        for section in parser.sections():
            for key, raw in parser.items(section):
                _apply(cfg, section, key, raw, base_dir)
    if env.get(OUTPUT_ENV):
        cfg.output_dir = env[OUTPUT_ENV]
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        lhs, raw = item.split("=", 1)
        section, key = lhs.rsplit(".", 1)
        _apply(cfg, section, key, raw, Path("."))
    return cfg
