from pathlib import Path

import numpy as np
import pytest

from kolext.bitcore import Table, table_from_bits

DATA = Path(__file__).parent / "data"


@pytest.fixture
def xor_table():
    return table_from_bits("0110", 1, 1)


@pytest.fixture
def data_dir():
    return DATA


def random_colours(rng: np.random.Generator, n: int, m: int) -> Table:
    return Table(n, m, rng.integers(0, 1 << m, size=1 << (2 * n)))


ACCEPTANCE_LINES: dict[int, str] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    line = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[criterion] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
