import numpy as np
import pytest

from turbinefault.dataio import build_labeled_dataset, synth_dataset
from turbinefault.powercurve import TurbineSpec


@pytest.fixture
def spec():
    return TurbineSpec(cut_in=3.0, rated_speed=13.0, cut_out=25.0, rated_power=3.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_dataset():
    """600 noisy, persistent-wind rows split 70/15/15."""
    spec = TurbineSpec(rated_power=3.0)
    records = synth_dataset(spec, 600, noise_sigma=0.03, fault_fraction=0.15, seed=7,
                            autocorrelation=0.97)
    return build_labeled_dataset(records, spec, seed=42)


_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    number, title = mark.args
    detail = "; ".join(v for k, v in item.user_properties if k == "detail")
    passed, prev_detail = _CRITERIA.get(number, (True, ""))
    if rep.failed or rep.when == "call":
        _CRITERIA[number] = (passed and rep.passed, "; ".join(d for d in (prev_detail, detail) if d))
        _CRITERIA.setdefault("_titles", {})[number] = title


def pytest_terminal_summary(terminalreporter):
    titles = _CRITERIA.get("_titles", {})
    if not titles:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(titles):
        passed, detail = _CRITERIA[number]
        line = f"criterion {number} {'PASS' if passed else 'FAIL'}: {titles[number]}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))
