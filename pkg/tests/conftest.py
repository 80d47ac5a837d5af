import sys

import numpy as np
import pytest

# published confusion matrix, rows = actual, cols = predicted, class order G, M, N, P
REFERENCE_CM = np.array([
    [143, 7, 0, 0],
    [0, 146, 0, 0],
    [0, 0, 159, 0],
    [2, 1, 0, 147],
])


def pairs_from_matrix(cm):
    """(predicted, actual) label arrays realising a confusion matrix."""
    actual, predicted = [], []
    for a in range(cm.shape[0]):
        for p in range(cm.shape[1]):
            actual += [a] * int(cm[a, p])
            predicted += [p] * int(cm[a, p])
    return np.array(predicted), np.array(actual)


@pytest.fixture
def reference_cm():
    return REFERENCE_CM.copy()


# -- acceptance reporting ------------------------------------------------------------


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")
    config._criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (report.when != "call" and report.passed):
        return
    number = marker.args[0]
    if report.failed or number not in item.config._criteria:
        item.config._criteria[number] = "PASS" if report.passed else "SKIP" if report.skipped else "FAIL"


def pytest_terminal_summary(terminalreporter, config):
    if not config._criteria:
        return
    module = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    details = getattr(module, "REPORT", {})
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(config._criteria):
        title, detail = details.get(number, ("", "no measurement recorded"))
        terminalreporter.write_line(f"criterion {number:2d} {config._criteria[number]}: {title}: {detail}")
