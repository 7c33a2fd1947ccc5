import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = {}


@pytest.fixture
def record():
    """Store (passed, detail) for an acceptance criterion; printed in the terminal summary."""
    def _record(number, name, passed, detail):
        ACCEPTANCE[number] = (name, bool(passed), detail)
        print(f"criterion {number} [{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d} {'PASS' if ok else 'FAIL'}  {name}: {detail}")
