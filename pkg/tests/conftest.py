import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


class CriterionLog:
    """Collects acceptance outcomes so they can be printed as one block."""

    def __init__(self):
        self.rows = {}

    def record(self, number: int, ok: bool, detail: str) -> bool:
        self.rows[number] = (bool(ok), detail)
        print(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        return bool(ok)


def pytest_configure(config):
    config._flatsol_criteria = CriterionLog()


@pytest.fixture(scope="session")
def criterion_log(request):
    return request.config._flatsol_criteria


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = config._flatsol_criteria.rows
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for k in range(1, 13):
        if k in rows:
            ok, detail = rows[k]
            terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {k:2d}: NOT RUN")
