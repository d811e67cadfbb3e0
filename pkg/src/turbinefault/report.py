"""Metrics, the model-comparison table and power-curve plot data.

Report files (``write_report``)
------------------------------
``report.json``
    ``{"format": "turbinefault.report", "version": 1, "fingerprint": {...},
    "best": <name>, "rows": [{"name", "epochs", "mse", "optimizer_iterations"}]}``.
    Holds everything that is reproducible from the config and seeds.
``timing.json``
    ``{"timestamp": ..., "wall_time_seconds": {<name>: seconds}}``.
    Measured wall-clock data, kept apart so ``report.json`` is byte-stable.
``report.txt``
    Aligned plain-text table with both.

Plot-data files (``export_curve_plot``)
---------------------------------------
``actual_curve.csv``: header ``wind_speed,mean_power,count``, one line per bin.
``predicted_curve.csv``: header ``wind_speed,predicted_power``, one line per point.
Speeds in m/s, power in MW, floats at full precision.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .exceptions import ArtifactIOError, DuplicateName, EmptyInput, LengthMismatch
from .powercurve import BinnedCurve, CurveBin

REPORT_FORMAT = "turbinefault.report"
REPORT_VERSION = 1
ACTUAL_CURVE_FILE = "actual_curve.csv"
PREDICTED_CURVE_FILE = "predicted_curve.csv"


def mse(predictions, targets) -> float:
    p = np.asarray(predictions, dtype=float).ravel()
    t = np.asarray(targets, dtype=float).ravel()
    if p.size != t.size:
        raise LengthMismatch(f"{p.size} predictions vs {t.size} targets")
    if p.size == 0:
        raise EmptyInput("mse of empty vectors")
    return float(np.mean((p - t) ** 2))


@dataclass(frozen=True)
class EvalRow:
    name: str
    epochs: int
    wall_time_seconds: float
    mse: float
    optimizer_iterations: int | None = None

    def __post_init__(self):
        if not (math.isfinite(self.mse) and self.mse >= 0):
            raise ValueError(f"{self.name}: mse must be finite and >= 0, got {self.mse}")
        if self.epochs < 0 or self.wall_time_seconds < 0:
            raise ValueError(f"{self.name}: negative epochs or wall time")


@dataclass(frozen=True)
class ComparisonReport:
    rows: tuple[EvalRow, ...]
    fingerprint: dict = field(default_factory=dict)
    timestamp: str = ""

    @property
    def best(self) -> EvalRow:
        """Lowest-MSE row; the earliest one wins ties."""
        return min(self.rows, key=lambda r: r.mse)

    def runner_up(self) -> EvalRow | None:
        rest = [r for r in self.rows if r is not self.best]
        return min(rest, key=lambda r: r.mse) if rest else None

    def mse_improvement(self) -> float | None:
        """``(mse_runner_up - mse_best) / mse_runner_up``."""
        other = self.runner_up()
        if other is None or other.mse == 0:
            return None
        return (other.mse - self.best.mse) / other.mse

    def time_overhead(self) -> float | None:
        """``(time_best - time_runner_up) / time_runner_up``."""
        other = self.runner_up()
        if other is None or other.wall_time_seconds == 0:
            return None
        return (self.best.wall_time_seconds - other.wall_time_seconds) / other.wall_time_seconds

    def to_dict(self) -> dict:
        return {
            "format": REPORT_FORMAT,
            "version": REPORT_VERSION,
            "fingerprint": dict(sorted(self.fingerprint.items())),
            "best": self.best.name,
            "rows": [
                {"name": r.name, "epochs": r.epochs, "mse": r.mse,
                 "optimizer_iterations": r.optimizer_iterations}
                for r in self.rows
            ],
        }

    def timing_dict(self) -> dict:
        return {"timestamp": self.timestamp,
                "wall_time_seconds": {r.name: r.wall_time_seconds for r in self.rows}}

    @classmethod
    def from_dicts(cls, doc: dict, timing: dict | None = None) -> "ComparisonReport":
        if doc.get("format") != REPORT_FORMAT or doc.get("version") != REPORT_VERSION:
            raise ArtifactIOError(f"not a version-{REPORT_VERSION} report")
        times = (timing or {}).get("wall_time_seconds", {})
        rows = tuple(
            EvalRow(r["name"], int(r["epochs"]), float(times.get(r["name"], 0.0)),
                    float(r["mse"]), r.get("optimizer_iterations"))
            for r in doc["rows"]
        )
        return cls(rows, dict(doc.get("fingerprint", {})), (timing or {}).get("timestamp", ""))


def build_report(rows, fingerprint: dict | None = None,
                 timestamp: str | None = None) -> ComparisonReport:
    rows = tuple(rows)
    if not rows:
        raise EmptyInput("a report needs at least one row")
    seen = set()
    for r in rows:
        if r.name in seen:
            raise DuplicateName(f"duplicate row name {r.name!r}")
        seen.add(r.name)
    if timestamp is None:
        timestamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return ComparisonReport(rows, dict(fingerprint or {}), timestamp)


def render_table(report: ComparisonReport) -> str:
    """Aligned plain-text table; the best row is marked with ``*``."""
    header = ("", "Model", "Epochs", "Time", "MSE")
    best = report.best
    lines = [
        ("*" if r is best else "", r.name, str(r.epochs), f"{r.wall_time_seconds:.2f} sec",
         f"{r.mse:.6f}")
        for r in report.rows
    ]
    widths = [max(len(row[i]) for row in [header] + lines) for i in range(len(header))]

    def fmt(row):
        return "  ".join([row[0].ljust(widths[0]), row[1].ljust(widths[1])]
                         + [c.rjust(w) for c, w in zip(row[2:], widths[2:])]).rstrip()

    out = [fmt(header), "-" * len(fmt(header))] + [fmt(row) for row in lines]
    gain = report.mse_improvement()
    if gain is not None:
        other = report.runner_up()
        out.append("")
        out.append(f"best: {best.name}; MSE {gain:.1%} below {other.name} "
                   "((runner_up - best) / runner_up)")
        overhead = report.time_overhead()
        if overhead is not None:
            out.append(f"training time {overhead:+.1%} relative to {other.name}")
    return "\n".join(out) + "\n"


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    try:
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)
    except OSError as exc:
        tmp.unlink(missing_ok=True)
        raise ArtifactIOError(f"cannot write {path}: {exc}") from exc


def write_report(report: ComparisonReport, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"report": out / "report.json", "timing": out / "timing.json",
             "table": out / "report.txt"}
    _atomic_write(paths["report"], json.dumps(report.to_dict(), indent=1) + "\n")
    _atomic_write(paths["timing"], json.dumps(report.timing_dict(), indent=1) + "\n")
    _atomic_write(paths["table"], render_table(report))
    return paths


def read_report(out_dir) -> ComparisonReport:
    out = Path(out_dir)
    try:
        doc = json.loads((out / "report.json").read_text(encoding="utf-8"))
        timing_path = out / "timing.json"
        timing = json.loads(timing_path.read_text(encoding="utf-8")) \
            if timing_path.exists() else None
    except (OSError, ValueError) as exc:
        raise ArtifactIOError(f"cannot read report in {out}: {exc}") from exc
    return ComparisonReport.from_dicts(doc, timing)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def export_curve_plot(actual: BinnedCurve, predicted, out_dir) -> tuple[Path, Path]:
    """Write the measured binned curve and the predicted points as CSV.

    ``predicted`` is a sequence of ``(wind_speed, predicted_power)`` pairs
    in physical units. Nothing is written unless both series are non-empty.
    """
    pred = np.asarray(list(predicted), dtype=float)
    if not actual.bins:
        raise EmptyInput("binned curve has no bins")
    if pred.size == 0:
        raise EmptyInput("no predicted points to export")
    if pred.ndim != 2 or pred.shape[1] != 2:
        raise LengthMismatch(f"predicted points must be pairs, got shape {pred.shape}")
    order = np.argsort(pred[:, 0], kind="stable")
    actual_text = _csv_text(("wind_speed", "mean_power", "count"),
                            [(repr(b.center), repr(b.mean_power), b.count) for b in actual.bins])
    pred_text = _csv_text(("wind_speed", "predicted_power"),
                          [(repr(float(v)), repr(float(p))) for v, p in pred[order]])
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ArtifactIOError(f"cannot create {out}: {exc}") from exc
    a_path, p_path = out / ACTUAL_CURVE_FILE, out / PREDICTED_CURVE_FILE
    _atomic_write(a_path, actual_text)
    _atomic_write(p_path, pred_text)
    return a_path, p_path


def read_curve_plot(out_dir, bin_width: float) -> tuple[BinnedCurve, np.ndarray]:
    out = Path(out_dir)
    try:
        with open(out / ACTUAL_CURVE_FILE, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))[1:]
        bins = tuple(CurveBin(float(c), float(m), int(n)) for c, m, n in rows)
        with open(out / PREDICTED_CURVE_FILE, newline="", encoding="utf-8") as fh:
            pred = np.array([[float(v), float(p)] for v, p in list(csv.reader(fh))[1:]])
    except (OSError, ValueError) as exc:
        raise ArtifactIOError(f"cannot read plot data in {out}: {exc}") from exc
    return BinnedCurve(bin_width, bins), pred
