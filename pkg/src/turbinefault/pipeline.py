"""Stage runner: ingest -> label -> train_svr -> sweep_nn -> report.

Each stage writes into ``<output_dir>/run-<config hash>/`` and records a
stamp (hash of its config slice and input files). A stage whose stamp
matches and whose outputs exist is skipped, so re-running is a no-op.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
import warnings
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from .config import RunConfig
from .dataio import (
    TEST,
    TRAIN,
    MetNormalizer,
    NormalizationStats,
    build_labeled_dataset,
    ingest_csv,
    read_dataset_csv,
    split_dataset,
    train_rated_power,
    write_dataset_csv,
    write_records_csv,
)
from .exceptions import ArtifactIOError, ConfigError, ConvergenceWarning, DataError
from .neuralnet import ArchKind, build_arch, evaluate, save_net, train
from .powercurve import bin_curve
from .report import EvalRow, build_report, export_curve_plot, write_report
from .svr import kfold_cv, load_svr, save_svr

logger = logging.getLogger(__name__)

STAGES = ("ingest", "label", "train_svr", "sweep_nn", "report")
SVR_ROW_NAME = "Support Vector Regression (Gaussian)"


def run_dir(cfg: RunConfig) -> Path:
    return Path(cfg.output_dir) / f"run-{cfg.config_hash()[:12]}"


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path: Path, doc) -> None:
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
        tmp.replace(path)
    except OSError as exc:
        raise ArtifactIOError(f"cannot write {path}: {exc}") from exc


def _read_json(path: Path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ArtifactIOError(f"cannot read {path}: {exc}") from exc


class Stage:
    """Skip-if-unchanged bookkeeping for one stage."""

    def __init__(self, root: Path, name: str, settings, inputs=(), outputs=()):
        self.root = root
        self.name = name
        self.outputs = [root / o for o in outputs]
        h = hashlib.sha256(json.dumps(settings, sort_keys=True, default=str).encode())
        for p in inputs:
            h.update(file_digest(root / p).encode())
        self.key = h.hexdigest()
        self.stamp = root / ".stamps" / f"{name}.json"

    def is_current(self) -> bool:
        if not self.stamp.exists() or not all(p.exists() for p in self.outputs):
            return False
        return _read_json(self.stamp).get("key") == self.key

    def done(self) -> None:
        self.stamp.parent.mkdir(parents=True, exist_ok=True)
        _write_json(self.stamp, {"stage": self.name, "key": self.key})


def report_fingerprint(cfg: RunConfig, n_rows: int) -> dict:
    return {"row_count": n_rows, "split_seed": cfg.split_seed,
            "config_hash": cfg.config_hash()[:16]}


def stage_ingest(cfg: RunConfig, root: Path) -> bool:
    st = Stage(root, "ingest", {"data": file_digest(cfg.data_path), "schema": cfg.schema,
                                "skip_rows": cfg.skip_rows, "strict": cfg.strict},
               outputs=("records.csv", "ingest.json"))
    if st.is_current():
        return False
    records, skipped = ingest_csv(cfg.data_path, cfg.schema, strict=cfg.strict,
                                  skip_rows=cfg.skip_rows, return_skipped=True)
    root.mkdir(parents=True, exist_ok=True)
    tmp = root / "records.csv.tmp"
    write_records_csv(records, tmp)
    tmp.replace(root / "records.csv")
    _write_json(root / "ingest.json", {"rows": len(records), "skipped": skipped,
                                       "source": Path(cfg.data_path).name})
    st.done()
    return True


def load_records(root: Path):
    return ingest_csv(root / "records.csv")


def stage_label(cfg: RunConfig, root: Path) -> bool:
    settings = {"turbine": [cfg.cut_in, cfg.rated_speed, cfg.cut_out, cfg.rated_power],
                "split": [list(cfg.fractions), cfg.split_mode, cfg.split_seed]}
    st = Stage(root, "label", settings, inputs=("records.csv",),
               outputs=("dataset.csv", "stats.json", "turbine.json"))
    if st.is_current():
        return False
    records = load_records(root)
    tags = split_dataset(len(records), cfg.fractions, cfg.split_seed, cfg.split_mode)
    rated = cfg.rated_power if cfg.rated_power is not None else train_rated_power(records, tags)
    if not rated > 0:
        raise DataError("training split has no positive power; set [turbine] rated_power")
    spec = cfg.turbine(rated)
    ds = build_labeled_dataset(records, spec, cfg.fractions, cfg.split_seed, cfg.split_mode)
    tmp = root / "dataset.csv.tmp"
    write_dataset_csv(ds, tmp)
    tmp.replace(root / "dataset.csv")
    _write_json(root / "stats.json", ds.stats.to_dict())
    _write_json(root / "turbine.json", {"cut_in": spec.cut_in, "rated_speed": spec.rated_speed,
                                        "cut_out": spec.cut_out,
                                        "rated_power": spec.rated_power})
    st.done()
    return True


def load_dataset(root: Path):
    stats = NormalizationStats.from_dict(_read_json(root / "stats.json"))
    return read_dataset_csv(root / "dataset.csv", stats)


def load_turbine(cfg: RunConfig, root: Path):
    return cfg.turbine(_read_json(root / "turbine.json")["rated_power"])


def stage_train_svr(cfg: RunConfig, root: Path) -> bool:
    st = Stage(root, "train_svr", {"svr": cfg.svr, "cv_folds": cfg.cv_folds},
               inputs=("dataset.csv", "stats.json"),
               outputs=("svr_model.json", "svr_eval.json"))
    if st.is_current():
        return False
    ds = load_dataset(root)
    X, y, _ = ds.split(TRAIN)
    Xt, yt, _ = ds.split(TEST)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        start = time.perf_counter()
        model = cfg.svr_estimator().fit(X, y)
        elapsed = time.perf_counter() - start
    for w in caught:
        logger.warning("%s", w.message)
    test_mse = float(np.mean((model.predict(Xt) - yt) ** 2)) if len(yt) else None
    evaluation = {"test_mse": test_mse, "wall_time_seconds": elapsed,
                  "n_iter": model.n_iter_, "converged": bool(model.converged_),
                  "n_support": int(model.dual_coef_.size), "epsilon": model.epsilon_}
    if cfg.cv_folds >= 2:
        mask = ds.split_tag != TEST
        cv = kfold_cv(ds.features[mask], ds.power_target[mask], cfg.cv_folds,
                      cfg.svr_estimator(), seed=cfg.split_seed)
        evaluation["cv"] = {"k": cfg.cv_folds, "fold_mses": list(cv.fold_mses),
                            "mean_mse": cv.mean_mse, "std_mse": cv.std_mse}
    tmp = root / "svr_model.json.tmp"
    save_svr(model, tmp, ds.stats)
    tmp.replace(root / "svr_model.json")
    _write_json(root / "svr_eval.json", evaluation)
    st.done()
    return True


def train_one_arch(cfg: RunConfig, root: Path, arch: str) -> dict:
    """Train, evaluate and persist a single architecture; returns its trace document."""
    ds = load_dataset(root)
    spec = load_turbine(cfg, root)
    tc = cfg.train_config(arch)
    model = build_arch(arch, overrides=cfg.arch_options.get(arch), seed=tc.seed)
    model, trace = train(model, ds, tc)
    doc = {
        "arch": arch,
        "name": ArchKind(arch).label,
        "test_mse": evaluate(model, ds, TEST),
        "val_mse": trace.best_val_loss,
        "epochs": trace.total_epochs,
        "trace": trace.to_dict(),
    }
    tmp = root / f"nn_{arch}.json.tmp"
    save_net(model, tmp, extra={"stats": ds.stats.to_dict(),
                                "turbine": {"cut_in": spec.cut_in, "cut_out": spec.cut_out,
                                            "rated_speed": spec.rated_speed,
                                            "rated_power": spec.rated_power}})
    tmp.replace(root / f"nn_{arch}.json")
    _write_json(root / f"trace_{arch}.json", doc)
    return doc


def stage_sweep_nn(cfg: RunConfig, root: Path, jobs: int = 1, archs=None) -> bool:
    archs = tuple(archs or cfg.archs)
    todo = []
    stages = {}
    for arch in archs:
        st = Stage(root, f"nn_{arch}", {"train": asdict_train(cfg, arch),
                                         "options": cfg.arch_options.get(arch)},
                   inputs=("dataset.csv", "stats.json"),
                   outputs=(f"nn_{arch}.json", f"trace_{arch}.json"))
        stages[arch] = st
        if not st.is_current():
            todo.append(arch)
    if not todo:
        return False
    Parallel(n_jobs=jobs)(delayed(train_one_arch)(cfg, root, a) for a in todo)
    for arch in todo:
        stages[arch].done()
    return True


def asdict_train(cfg: RunConfig, arch: str) -> dict:
    tc = cfg.train_config(arch)
    return {k: getattr(tc, k) for k in tc.__dataclass_fields__}


def collect_rows(cfg: RunConfig, root: Path) -> list[EvalRow]:
    rows = []
    for arch in cfg.archs:
        path = root / f"trace_{arch}.json"
        if path.exists():
            doc = _read_json(path)
            rows.append(EvalRow(doc["name"], int(doc["epochs"]),
                                float(doc["trace"]["wall_time_seconds"]),
                                float(doc["test_mse"])))
    svr_path = root / "svr_eval.json"
    if svr_path.exists():
        ev = _read_json(svr_path)
        if ev.get("test_mse") is not None:
            rows.append(EvalRow(SVR_ROW_NAME, 0, float(ev["wall_time_seconds"]),
                                float(ev["test_mse"]), int(ev["n_iter"])))
    return rows


def stage_report(cfg: RunConfig, root: Path) -> bool:
    inputs = [p for p in (["dataset.csv", "svr_model.json", "svr_eval.json"]
                          + [f"trace_{a}.json" for a in cfg.archs])
              if (root / p).exists()]
    st = Stage(root, "report", {"archs": list(cfg.archs), "bin_width": cfg.bin_width},
               inputs=inputs, outputs=("report.json", "report.txt", "timing.json",
                                       "actual_curve.csv", "predicted_curve.csv"))
    if st.is_current():
        return False
    rows = collect_rows(cfg, root)
    if not rows:
        raise DataError("no trained models found; run train_svr and sweep_nn first")
    ds = load_dataset(root)
    report = build_report(rows, report_fingerprint(cfg, len(ds)))
    write_report(report, root)
    export_plot_data(cfg, root)
    st.done()
    return True


def export_plot_data(cfg: RunConfig, root: Path):
    """Measured binned curve over all rows and SVR predictions on the test split, in MW."""
    ds = load_dataset(root)
    curve = bin_curve(ds.wind_speed(), ds.power(), cfg.bin_width)
    model, stats = load_svr(root / "svr_model.json")
    test = ds.mask(TEST) if ds.mask(TEST).any() else np.ones(len(ds), dtype=bool)
    pred_mw = MetNormalizer.from_stats(stats).inverse_transform_target(
        model.predict(ds.features[test]))
    return export_curve_plot(curve, zip(ds.wind_speed()[test], pred_mw), root)


def run_pipeline(cfg: RunConfig, stages=STAGES, jobs: int = 1) -> Path:
    """Run the requested stages in their fixed order; returns the run directory."""
    unknown = set(stages) - set(STAGES)
    if unknown:
        raise ConfigError(f"unknown stage(s): {sorted(unknown)}")
    cfg.validate(require_data="ingest" in stages)
    root = run_dir(cfg)
    runners = {
        "ingest": lambda: stage_ingest(cfg, root),
        "label": lambda: stage_label(cfg, root),
        "train_svr": lambda: stage_train_svr(cfg, root),
        "sweep_nn": lambda: stage_sweep_nn(cfg, root, jobs),
        "report": lambda: stage_report(cfg, root),
    }
    for name in STAGES:
        if name in stages:
            ran = runners[name]()
            logger.info("stage %s: %s", name, "done" if ran else "up to date")
    return root
