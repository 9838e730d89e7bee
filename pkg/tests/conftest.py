import numpy as np
import pytest

from nlskam.hamiltonian import WeightParams
from nlskam.indexing import ModeSet


@pytest.fixture
def params():
    return WeightParams(p=2.0, s=1.0, a=0.0, eta=0.0, theta=0.5, r=1.0)


@pytest.fixture
def modes2():
    return ModeSet(2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line; shown in the terminal summary."""

    def report(number: int, ok: bool, detail: str):
        CRITERIA.append(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
        print(CRITERIA[-1])
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
