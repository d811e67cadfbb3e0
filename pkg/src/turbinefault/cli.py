"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 training
error, 5 file I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from pathlib import Path

import numpy as np

from . import pipeline
from .config import load_config
from .dataio import (
    WIND_SPEED_COL,
    MetNormalizer,
    NormalizationStats,
    ingest_csv,
    records_to_arrays,
    split_counts,
    split_dataset,
    surrogate_records,
    synth_dataset,
    write_records_csv,
)
from .exceptions import ArtifactIOError, ConfigError, TurbineFaultError
from .neuralnet import ArchKind, forward
from .neuralnet.model import model_from_dict
from .powercurve import TurbineSpec, is_fault
from .report import build_report, render_table, write_report
from .svr import kfold_cv, load_svr

logger = logging.getLogger("turbinefault")


def _add_config(p):
    p.add_argument("--config", "-c", help="INI run configuration")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="SECTION.KEY=VALUE", help="override one config key (repeatable)")


def _cfg(args, require_data=True):
    cfg = load_config(args.config, args.overrides)
    return cfg.validate(require_data=require_data)


def _stages_through(cfg, last, jobs=1):
    stages = pipeline.STAGES[:pipeline.STAGES.index(last) + 1]
    return pipeline.run_pipeline(cfg, stages, jobs=jobs)


def cmd_run(args):
    cfg = _cfg(args)
    stages = args.stages.split(",") if args.stages else pipeline.STAGES
    root = pipeline.run_pipeline(cfg, [s.strip() for s in stages], jobs=args.jobs)
    print(root)
    table = root / "report.txt"
    if table.exists():
        sys.stdout.write(table.read_text(encoding="utf-8"))


def cmd_ingest(args):
    cfg = _cfg(args)
    root = _stages_through(cfg, "ingest")
    meta = json.loads((root / "ingest.json").read_text())
    print(f"{meta['rows']} records ({meta['skipped']} skipped) -> {root / 'records.csv'}")


def cmd_label(args):
    cfg = _cfg(args)
    root = _stages_through(cfg, "label")
    ds = pipeline.load_dataset(root)
    print(f"{len(ds)} rows, fault share {ds.fault_label.mean():.4f} -> {root / 'dataset.csv'}")


def cmd_split(args):
    cfg = _cfg(args)
    root = _stages_through(cfg, "ingest")
    n = len(pipeline.load_records(root))
    tags = split_dataset(n, cfg.fractions, cfg.split_seed, cfg.split_mode)
    out = Path(args.out) if args.out else root / "split.csv"
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("index,split_tag\n")
        fh.writelines(f"{i},{t}\n" for i, t in enumerate(tags))
    tr, va, te = split_counts(n, cfg.fractions)
    print(f"Train {tr}  Val {va}  Test {te}  ({cfg.split_mode}, seed {cfg.split_seed}) -> {out}")


def cmd_train_svr(args):
    cfg = _cfg(args)
    root = _stages_through(cfg, "train_svr")
    ev = json.loads((root / "svr_eval.json").read_text())
    if args.out:
        shutil.copyfile(root / "svr_model.json", args.out)
    print(f"test MSE {ev['test_mse']:.6f}  support vectors {ev['n_support']}  "
          f"iterations {ev['n_iter']}  -> {args.out or root / 'svr_model.json'}")


def cmd_cv(args):
    cfg = _cfg(args)
    root = _stages_through(cfg, "label")
    ds = pipeline.load_dataset(root)
    mask = ds.split_tag != "Test"
    rep = kfold_cv(ds.features[mask], ds.power_target[mask], args.k, cfg.svr_estimator(),
                   seed=cfg.split_seed, n_jobs=args.jobs)
    for i, m in enumerate(rep.fold_mses, 1):
        print(f"fold {i}: MSE {m:.6f}")
    print(f"mean {rep.mean_mse:.6f}  std {rep.std_mse:.6f}")


def cmd_train_nn(args):
    cfg = _cfg(args)
    root = _stages_through(cfg, "label")
    doc = pipeline.train_one_arch(cfg, root, args.arch)
    if args.out:
        shutil.copyfile(root / f"nn_{args.arch}.json", args.out)
    print(f"{doc['name']}: epochs {doc['epochs']}  test MSE {doc['test_mse']:.6f}  "
          f"time {doc['trace']['wall_time_seconds']:.2f}s")


def cmd_sweep(args):
    cfg = _cfg(args)
    root = _stages_through(cfg, "label")
    pipeline.stage_sweep_nn(cfg, root, jobs=args.jobs)
    for arch in cfg.archs:
        doc = json.loads((root / f"trace_{arch}.json").read_text())
        print(f"{doc['name']}: epochs {doc['epochs']}  test MSE {doc['test_mse']:.6f}")


def cmd_report(args):
    if args.run_dir:
        cfg = load_config(args.config, args.overrides)
        root = Path(args.run_dir)
    else:
        cfg = _cfg(args)
        root = _stages_through(cfg, "label")
    rows = pipeline.collect_rows(cfg, root)
    if not rows:
        raise ArtifactIOError(f"no run traces found in {root}")
    n_rows = len(pipeline.load_dataset(root))
    report = build_report(rows, pipeline.report_fingerprint(cfg, n_rows))
    write_report(report, root)
    sys.stdout.write(render_table(report))


def cmd_plot_data(args):
    cfg = _cfg(args)
    root = _stages_through(cfg, "train_svr")
    a, p = pipeline.export_plot_data(cfg, root)
    print(f"{a}\n{p}")


def cmd_synth(args):
    if args.surrogate:
        records = surrogate_records(seed=args.seed)
    else:
        spec = TurbineSpec(args.cut_in, args.rated_speed, args.cut_out, args.rated_power)
        records = synth_dataset(spec, args.n, args.noise, args.fault_fraction, args.seed,
                                autocorrelation=args.autocorrelation)
    write_records_csv(records, args.out)
    print(f"{len(records)} records -> {args.out}")


def _load_any_model(path):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ArtifactIOError(f"cannot read model {path}: {exc}") from exc
    return doc


def cmd_predict(args):
    doc = _load_any_model(args.model)
    records = ingest_csv(args.input, strict=not args.lenient)
    X, _ = records_to_arrays(records)
    fmt = doc.get("format")
    out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    try:
        if fmt == "turbinefault.svr":
            model, stats = load_svr(args.model)
            if stats is None:
                raise ConfigError("SVR model file carries no normalisation stats")
            norm = MetNormalizer.from_stats(stats)
            pred = model.predict(norm.transform(X))
            out.write("index,power_normalized,power_mw\n")
            for i, (p, mw) in enumerate(zip(pred, norm.inverse_transform_target(pred))):
                out.write(f"{i},{p!r},{mw!r}\n")
        elif fmt == "turbinefault.net":
            model = model_from_dict(doc)
            extra = doc.get("extra") or {}
            if "stats" not in extra:
                raise ConfigError("network model file carries no normalisation stats")
            norm = MetNormalizer.from_stats(NormalizationStats.from_dict(extra["stats"]))
            w = model.window
            if model.kind is ArchKind.NAR:
                t = extra["turbine"]
                spec = TurbineSpec(t["cut_in"], t["rated_speed"], t["cut_out"], t["rated_power"])
                labels = is_fault(X[:, WIND_SPEED_COL], spec).astype(float)
                starts = np.arange(len(labels) - w)[:, None] + np.arange(w)
                windows, first = labels[starts], w
            elif w == 1:
                windows, first = norm.transform(X), 0
            else:
                Z = norm.transform(X)
                starts = np.arange(len(Z) - w + 1)[:, None] + np.arange(w)
                windows, first = Z[starts], w - 1
            prob = forward(model, windows) if len(windows) else np.empty(0)
            out.write("index,fault_probability,fault\n")
            for k, p in enumerate(prob):
                out.write(f"{k + first},{p!r},{int(p >= 0.5)}\n")
        else:
            raise ArtifactIOError(f"{args.model}: unknown model format {fmt!r}")
    finally:
        if out is not sys.stdout:
            out.close()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="turbinefault",
                                     description="Power-curve fault analysis toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run pipeline stages from one config")
    _add_config(p)
    p.add_argument("--stages", help=f"comma list from {','.join(pipeline.STAGES)}")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_run)

    for name, func, text in (("ingest", cmd_ingest, "validate and copy the input CSV"),
                             ("label", cmd_label, "split, normalise and fault-label"),
                             ("plot-data", cmd_plot_data, "export power-curve plot data")):
        p = sub.add_parser(name, help=text)
        _add_config(p)
        p.set_defaults(func=func)

    p = sub.add_parser("split", help="write split tags")
    _add_config(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train-svr", help="train the Gaussian SVR")
    _add_config(p)
    p.add_argument("--out", help="copy the model file here")
    p.set_defaults(func=cmd_train_svr)

    p = sub.add_parser("cv", help="k-fold cross-validation of the SVR")
    _add_config(p)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("train-nn", help="train one fault network")
    _add_config(p)
    p.add_argument("--arch", required=True, choices=[k.value for k in ArchKind])
    p.add_argument("--out", help="copy the model file here")
    p.set_defaults(func=cmd_train_nn)

    p = sub.add_parser("sweep", help="train every configured architecture")
    _add_config(p)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="build the comparison table")
    _add_config(p)
    p.add_argument("--run-dir", help="existing run directory to collect from")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("predict", help="apply a saved model to a CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output")
    p.add_argument("--lenient", action="store_true", help="skip unparseable rows")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("synth", help="write a synthetic met/power CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--surrogate", action="store_true",
                   help="29,736-row stand-in for the NREL 2012 site file")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--noise", type=float, default=0.03)
    p.add_argument("--fault-fraction", type=float, default=0.12)
    p.add_argument("--autocorrelation", type=float, default=0.99)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cut-in", type=float, default=3.0)
    p.add_argument("--rated-speed", type=float, default=13.0)
    p.add_argument("--cut-out", type=float, default=25.0)
    p.add_argument("--rated-power", type=float, default=3.0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except TurbineFaultError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ArtifactIOError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
