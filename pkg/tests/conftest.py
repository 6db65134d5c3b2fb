from __future__ import annotations

import numpy as np
import pytest

from fracheat.regions import parse_region
from fracheat.spectral import build_basis

CRITERIA: list[tuple[int, str]] = []


def record(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    CRITERIA.append((number, line))
    print(line)


@pytest.fixture(scope="session")
def basis34():
    return build_basis(0.75, 20, grid=1024)


@pytest.fixture(scope="session")
def basis34_small():
    return build_basis(0.75, 20, grid=512)


@pytest.fixture(scope="session")
def basis14():
    return build_basis(0.25, 20, grid=1024)


@pytest.fixture(scope="session")
def region():
    return parse_region("1.5:2.5")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(CRITERIA, key=lambda item: item[0]):
            terminalreporter.write_line(line)
