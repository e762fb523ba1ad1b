import numpy as np
import pytest

import levyhazard as lh
from levyhazard.posterior import ModelSpec, QuadSettings


def make_data(event_times, censor_times=()):
    recs = [lh.SurvivalRecord(float(t), True) for t in event_times]
    recs += [lh.SurvivalRecord(float(t), False) for t in censor_times]
    return lh.Dataset(recs)


@pytest.fixture(scope="session")
def small_data():
    """Four events and two censored records."""
    return make_data([0.4, 0.8, 1.2, 1.6], [0.5, 1.0])


@pytest.fixture(scope="session")
def gg_model(small_data):
    return ModelSpec(
        lh.DykstraLaud(), lh.GeneralizedGamma(0.5, 1.0),
        lh.lebesgue(0.0, 2.5), small_data,
    )


@pytest.fixture(scope="session")
def gamma_model(small_data):
    return ModelSpec(
        lh.DykstraLaud(), lh.GeneralizedGamma(0.0, 1.0),
        lh.lebesgue(0.0, 2.5), small_data,
    )


@pytest.fixture(scope="session")
def beta_model(small_data):
    return ModelSpec(
        lh.DykstraLaud(), lh.BetaProcess(2.0),
        lh.lebesgue(0.0, 2.5), small_data,
    )


def bell_numbers(n_max):
    """Bell numbers by the Bell triangle recurrence (independent oracle):
    each row starts with the previous row's last entry and accumulates;
    Bell(n) is the last entry of row n."""
    bells = [1]
    row = [1]
    for _ in range(n_max - 1):
        new = [row[-1]]
        for v in row:
            new.append(new[-1] + v)
        row = new
        bells.append(row[-1])
    return bells


def assert_close(a, b, rel=1e-10, abs_tol=0.0):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    np.testing.assert_allclose(a, b, rtol=rel, atol=abs_tol)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num, name, elapsed, limit in sorted(RESULTS):
        terminalreporter.write_line(
            f"ACCEPTANCE {num} {name}: PASS ({elapsed:.2f}s of {limit:.0f}s budget)"
        )
