import numpy as np
import pytest

from forestgp.dataio import SynthConfig, generate_synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_ds():
    return generate_synthetic(SynthConfig(n_plots=60, n_predictors=12, seed=3))


@pytest.fixture(scope="session")
def full_ds():
    return generate_synthetic(SynthConfig(seed=0))


def random_problem(rng, n_t=20, n_y=3, n_x=5):
    X = rng.normal(size=(n_t, n_x))
    Y = rng.gamma(2.0, 1.0, size=(n_t, n_y)) * np.arange(1, n_y + 1)
    return X, Y


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or rep.when != "call":
        return
    number, title = mark.args
    detail = dict(item.user_properties).get("detail", "")
    status = "PASS" if rep.passed else "FAIL"
    line = f"criterion {number:>2} {title}: {status}  {detail}".rstrip()
    item.config.stash.setdefault(_ACCEPTANCE, []).append((number, line))


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
