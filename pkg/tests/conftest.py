import numpy as np
import pytest

from segdepth import default_class_table

_ACCEPTANCE = {}


@pytest.fixture
def cs19():
    return default_class_table("cityscapes19")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def acceptance():
    """Record a one-line verdict for an acceptance criterion."""
    def record(criterion, passed, detail):
        _ACCEPTANCE[criterion] = (passed, detail)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE, key=lambda k: (int(k.split(".")[0].rstrip("ab")), k)):
        passed, detail = _ACCEPTANCE[key]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {key}: {detail}")
