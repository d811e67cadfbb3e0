"""Acceptance suite: one or more tests per criterion, summarised at the end of the run.

Run alone with ``pytest tests/test_acceptance.py -v``; the "acceptance
criteria" section of the terminal summary has one PASS/FAIL line per
criterion.
"""

import time

import numpy as np
import pytest

from turbinefault import pipeline
from turbinefault.config import RunConfig
from turbinefault.dataio import (
    TEST,
    TRAIN,
    build_labeled_dataset,
    records_to_arrays,
    surrogate_records,
    synth_dataset,
    write_records_csv,
)
from turbinefault.neuralnet import (
    PRETRAIN,
    SUPERVISED,
    ArchKind,
    EarlyStopping,
    TrainConfig,
    build_arch,
    fit_arrays,
    loss_and_gradients,
    mse_on,
)
from turbinefault.powercurve import TurbineSpec, is_fault
from turbinefault.report import read_report
from turbinefault.svr import GaussianSVR, kfold_cv, kfold_indices


def note(request, text):
    request.node.user_properties.append(("detail", text))


def random_spec(rng):
    cut_in = rng.uniform(0.5, 6.0)
    rated = cut_in + rng.uniform(0.5, 12.0)
    cut_out = rated + rng.uniform(0.5, 20.0)
    return TurbineSpec(cut_in, rated, cut_out, rng.uniform(0.1, 10.0))


def normalized_curve_points(spec, n, seed):
    X, p = records_to_arrays(synth_dataset(spec, n, 0.0, 0.0, seed=seed))
    Z = (X - X.mean(axis=0)) / X.std(axis=0)
    return Z, (p - p.min()) / (p.max() - p.min())


def kkt_breach(model, X, y):
    coef = np.zeros(len(y))
    coef[model.support_] = model.dual_coef_
    box = np.abs(coef).max(initial=0.0) - model.C
    free = (np.abs(coef) > 1e-12) & (np.abs(coef) < model.C - 1e-9)
    resid = np.abs(y[free] - model.predict(X[free]))
    tube = np.abs(resid - model.epsilon_).max(initial=0.0)
    return box, tube


# --- 1 -------------------------------------------------------------------

@pytest.mark.criterion(1, "region labels agree with a two-comparison oracle")
def test_region_label_oracle(request):
    rng = np.random.default_rng(1)
    grid = np.round(np.arange(4001) * 0.01, 2)
    specs = [random_spec(rng) for _ in range(100)]
    start = time.perf_counter()
    mismatches = 0
    for spec in specs:
        labels = is_fault(grid, spec)
        mismatches += sum(int(lab) != int(v < spec.cut_in or v > spec.cut_out)
                          for v, lab in zip(grid.tolist(), labels.tolist()))
    elapsed = time.perf_counter() - start
    # time the labelling call alone against the budget
    t0 = time.perf_counter()
    for spec in specs:
        is_fault(grid, spec)
    label_time = time.perf_counter() - t0
    note(request, f"{mismatches} mismatches over {100 * grid.size} points, "
                  f"labelling {label_time:.3f}s, with oracle {elapsed:.2f}s")
    assert mismatches == 0
    assert elapsed < 1.0


# --- 2 -------------------------------------------------------------------

def sampled_grad_error(model, x, y, phase, rng, per_array=15, step=1e-5):
    _, grads = loss_and_gradients(model, x, y, phase)
    worst = 0.0
    for p, g in zip(model.parameters(phase), grads):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for k in rng.choice(flat.size, size=min(per_array, flat.size), replace=False):
            old = flat[k]
            flat[k] = old + step
            up = loss_and_gradients(model, x, y, phase)[0]
            flat[k] = old - step
            dn = loss_and_gradients(model, x, y, phase)[0]
            flat[k] = old
            num = (up - dn) / (2 * step)
            denom = max(abs(num) + abs(gflat[k]), 1e-7)
            worst = max(worst, abs(num - gflat[k]) / denom)
    return worst


@pytest.mark.criterion(2, "analytic gradients match central differences")
def test_gradient_checks(request):
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    errors = {}
    for kind in ArchKind:
        model = build_arch(kind, seed=11)
        if kind is ArchKind.NAR:
            x = rng.integers(0, 2, (16, model.window)).astype(float)
        elif model.window == 1:
            x = rng.normal(size=(16, model.input_width))
        else:
            x = rng.normal(size=(16, model.window, model.input_width))
        y = rng.integers(0, 2, 16).astype(float)
        errors[kind.value] = sampled_grad_error(model, x, y, SUPERVISED, rng)
        if kind is ArchKind.SPARSE_AUTOENCODER:
            errors["sae-pretrain"] = sampled_grad_error(model, x, None, PRETRAIN, rng)
    elapsed = time.perf_counter() - start
    note(request, f"max rel err {max(errors.values()):.1e}, {elapsed:.1f}s")
    assert all(e < 1e-4 for e in errors.values()), errors
    assert elapsed < 30


# --- 3 -------------------------------------------------------------------

@pytest.mark.criterion(3, "SVR capacity")
def test_svr_capacity_noiseless(request):
    spec = TurbineSpec(rated_power=3.0)
    X, y = normalized_curve_points(spec, 50, seed=3)
    start = time.perf_counter()
    model = GaussianSVR(C=10.0, epsilon=0.01).fit(X, y)
    train_mse = float(np.mean((model.predict(X) - y) ** 2))
    note(request, f"noiseless train MSE {train_mse:.2e} in {time.perf_counter() - start:.2f}s")
    assert train_mse < 1e-3


def noisy_heldout_mse(seed, sigma):
    spec = TurbineSpec(rated_power=3.0)
    ds = build_labeled_dataset(synth_dataset(spec, 5000, 0.0, 0.0, seed=seed), spec, seed=seed)
    y = ds.power_target + np.random.default_rng(100 + seed).normal(0, sigma, len(ds))
    tr, te = ds.mask(TRAIN), ds.mask(TEST)
    model = GaussianSVR().fit(ds.features[tr], y[tr])
    return float(np.mean((model.predict(ds.features[te]) - y[te]) ** 2))


@pytest.mark.criterion(3, "SVR capacity")
def test_svr_capacity_noisy(request):
    sigma = 0.05
    start = time.perf_counter()
    held_out = noisy_heldout_mse(0, sigma)
    elapsed = time.perf_counter() - start
    # other draws are reported for context only; see the decisions ledger
    spread = [noisy_heldout_mse(seed, sigma) for seed in range(1, 6)]
    note(request, f"5000-point held-out MSE {held_out:.5f} in {elapsed:.1f}s, band "
                  f"[{0.8 * sigma**2:.4f}, {2 * sigma**2:.4f}]; draws 1-5 (not gated): "
                  + ", ".join(f"{m:.4f}" for m in spread))
    assert 0.8 * sigma ** 2 <= held_out <= 2.0 * sigma ** 2
    assert elapsed < 60


# --- 4 -------------------------------------------------------------------

@pytest.mark.criterion(4, "KKT and feasibility after converged SVR training")
@pytest.mark.parametrize("C, eps, n, noise", [(0.1, 0.01, 300, 0.05), (1.0, None, 800, 0.05),
                                              (10.0, 0.01, 400, 0.1), (100.0, 0.0, 150, 0.02),
                                              (1.0, 0.2, 300, 0.0)])
def test_kkt(request, C, eps, n, noise):
    spec = TurbineSpec(rated_power=3.0)
    X, y = normalized_curve_points(spec, n, seed=n)
    y = y + np.random.default_rng(4).normal(0, noise, n)
    model = GaussianSVR(C=C, epsilon=eps, tol=1e-4).fit(X, y)
    assert model.converged_
    box, tube = kkt_breach(model, X, y)
    note(request, f"C={C}: box excess {box:.1e}, tube breach {tube:.1e}")
    assert box <= 1e-9
    assert tube <= 10 * model.tol


# --- 5 -------------------------------------------------------------------

@pytest.mark.criterion(5, "early stopping and best-epoch restore")
@pytest.mark.parametrize("losses, patience, best", [
    ([5, 4, 3, 2, 1] + [1.5] * 20, 3, 5),
    ([1.0] * 30, 6, 1),
    ([3, 2, 2, 2, 1, 1, 1, 1, 1], 4, 5),
    ([9, 8, 7, 6, 7, 5, 6, 6, 6, 6, 6, 6, 6], 6, 6),
])
def test_early_stopping_sequences(request, losses, patience, best):
    stop = EarlyStopping(patience)
    for epoch, v in enumerate(losses, 1):
        stop.update(v)
        if stop.should_stop:
            break
    note(request, f"stopped at {epoch}, best {stop.best_epoch}")
    assert stop.should_stop
    assert stop.best_epoch == best
    assert epoch == best + patience


@pytest.mark.criterion(5, "early stopping and best-epoch restore")
@pytest.mark.parametrize("kind", ["ff", "rnn", "sae"])
def test_restored_model(request, kind):
    rng = np.random.default_rng(5)
    w = 1 if kind in ("ff", "sae") else 4
    x = rng.normal(size=(240, w, 9)) if w > 1 else rng.normal(size=(240, 9))
    y = ((x[..., 0] if w == 1 else x[:, -1, 0]) + 0.5 * rng.normal(size=240) > 0).astype(float)
    model = build_arch(kind, overrides={"window": 4} if kind == "rnn" else None, seed=1)
    cfg = TrainConfig(max_epochs=300, patience=5, learning_rate=0.1, seed=3)
    _, trace = fit_arrays(model, x[:180], y[:180], x[180:], y[180:], cfg)
    gap = abs(mse_on(model, x[180:], y[180:]) - trace.best_val_loss)
    note(request, f"{kind}: best {trace.best_epoch}/{trace.epochs_run}, gap {gap:.1e}")
    if trace.epochs_run < cfg.max_epochs:
        assert trace.epochs_run == trace.best_epoch + cfg.patience
    assert gap <= 1e-9


# --- 6 -------------------------------------------------------------------

@pytest.fixture(scope="module")
def surrogate_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("surrogate")
    data = base / "surrogate.csv"
    write_records_csv(surrogate_records(), data)
    cfg = RunConfig(data_path=str(data), output_dir=str(base / "runs"))
    root = pipeline.run_pipeline(cfg, ("ingest", "label", "train_svr", "sweep_nn", "report"))
    return root


@pytest.mark.slow
@pytest.mark.criterion(6, "surrogate-scale reproduction with default configs")
def test_surrogate_svr(request, surrogate_run):
    import json
    ev = json.loads((surrogate_run / "svr_eval.json").read_text())
    note(request, f"SVR held-out MSE {ev['test_mse']:.5f} in {ev['wall_time_seconds']:.1f}s")
    assert ev["test_mse"] <= 0.15


@pytest.mark.slow
@pytest.mark.criterion(6, "surrogate-scale reproduction with default configs")
def test_surrogate_networks(request, surrogate_run):
    rep = read_report(surrogate_run)
    nets = [r for r in rep.rows if r.name != pipeline.SVR_ROW_NAME]
    assert len(nets) == 5
    for r in nets:
        note(request, f"{r.name.split(' (')[0]}: MSE {r.mse:.4f}, {r.epochs} epochs, "
                      f"{r.wall_time_seconds:.1f}s")
    best_net = min(nets, key=lambda r: r.mse)
    note(request, f"best network {best_net.name} (not gated)")
    assert all(r.mse <= 0.10 for r in nets)
    assert all(r.wall_time_seconds <= 120 for r in nets)


# --- 7 -------------------------------------------------------------------

@pytest.mark.criterion(7, "byte-identical reports and model files across runs")
def test_pipeline_determinism(request, tmp_path):
    spec = TurbineSpec(rated_power=3.0)
    data = tmp_path / "met.csv"
    write_records_csv(synth_dataset(spec, 1500, 0.03, 0.12, seed=7, autocorrelation=0.99), data)
    roots = []
    for out in ("first", "second"):
        cfg = RunConfig(data_path=str(data), output_dir=str(tmp_path / out))
        roots.append(pipeline.run_pipeline(cfg))
    names = ["report.json", "svr_model.json", "actual_curve.csv", "predicted_curve.csv"] + \
        [f"nn_{k.value}.json" for k in ArchKind]
    differing = [n for n in names
                 if (roots[0] / n).read_bytes() != (roots[1] / n).read_bytes()]
    note(request, f"{len(names) - len(differing)}/{len(names)} files identical")
    assert not differing


# --- 8 -------------------------------------------------------------------

@pytest.mark.criterion(8, "leave-one-out equals brute force")
def test_leave_one_out(request):
    spec = TurbineSpec(rated_power=3.0)
    X, y = normalized_curve_points(spec, 10, seed=8)
    y = y + np.random.default_rng(8).normal(0, 0.05, 10)
    est = GaussianSVR(C=5.0, epsilon=0.01)
    rep = kfold_cv(X, y, k=10, estimator=est, seed=0)
    folds = kfold_indices(10, 10, seed=0)
    brute = []
    for held in folds:
        keep = np.setdiff1d(np.arange(10), held)
        m = GaussianSVR(C=5.0, epsilon=0.01).fit(X[keep], y[keep])
        brute.append(float(np.mean((m.predict(X[held]) - y[held]) ** 2)))
    gap = float(np.max(np.abs(np.array(rep.fold_mses) - brute)))
    note(request, f"max fold gap {gap:.1e}")
    assert sorted(len(f) for f in folds) == [1] * 10
    assert gap <= 1e-9
