import numpy as np
import pytest

from scopeguard import (
    CalibrationConfig,
    apply_thresholds,
    fit,
    generate,
    knn_fit,
    separable_scenario,
    sweep,
)


@pytest.fixture(scope="session")
def separable():
    """Separable scenario with kNN predictions on test and stream."""
    train, test, stream = generate(separable_scenario(seed=0))
    model = knn_fit(train, 5)
    test = test.with_predictions(model.predict(test.features))
    stream = stream.with_predictions(model.predict(stream.features))
    return train, test, stream


@pytest.fixture(scope="session")
def fitted(separable):
    train, test, _ = separable
    return fit(train, test, 120, CalibrationConfig(seed=0))


@pytest.fixture(scope="session")
def sweep_rows(fitted, separable):
    return sweep(fitted, separable[1], CalibrationConfig(seed=0))


@pytest.fixture(scope="session")
def calibrated(fitted, sweep_rows):
    return apply_thresholds(fitted, sweep_rows)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
