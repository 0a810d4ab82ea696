import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qpress.symbolic import from_table, potts_alphabet, random_potential

settings.register_profile("qpress", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("qpress")

_criteria = {}


@pytest.fixture
def generic_pot():
    """Seeded random q=2, memory-2 potential used across the suite."""
    return random_potential(2, 2, 0)


@pytest.fixture
def zero_pot():
    return from_table(potts_alphabet(3), 2, np.zeros(9))


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    crit = props.get("criterion")
    if crit is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        # a criterion spread over several parametrized tests fails if any of them does
        prev = _criteria.get(crit, ("passed", ""))[0]
        outcome = report.outcome if prev == "passed" else prev
        _criteria[crit] = (outcome, props.get("title", ""))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_criteria):
        outcome, title = _criteria[crit]
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {crit}: {status}  {title}".rstrip())
