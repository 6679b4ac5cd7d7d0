import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


def pytest_terminal_summary(terminalreporter):
    from oracles import ACCEPTANCE
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in acceptance_lines(ACCEPTANCE):
        terminalreporter.write_line(line)


def acceptance_lines(results):
    lines = []
    for n in sorted(results):
        parts = results[n]
        failed = [name for name, ok in parts if not ok]
        status = "FAIL" if failed else "PASS"
        detail = f"failed: {'; '.join(failed)}" if failed else f"{len(parts)} check(s)"
        lines.append(f"criterion {n:>2}: {status}  ({detail})")
    return lines
