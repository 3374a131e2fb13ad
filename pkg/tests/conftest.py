import pytest
from hypothesis import HealthCheck, settings

from helpers import brownian, jump_diffusion

settings.register_profile("default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def bm():
    return brownian()


@pytest.fixture
def jd():
    return jump_diffusion()


_CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion; echoed in the terminal summary."""

    def report(number: int, title: str, passed: bool, detail: str = "") -> bool:
        line = f"criterion {number:>2} [{'PASS' if passed else 'FAIL'}] {title}" + (f": {detail}" if detail else "")
        print(line)
        _CRITERIA.append(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
