import numpy as np
import pytest

from huda import bench


@pytest.fixture(scope="session")
def train_data():
    return [bench.generate_dataset(s) for s in bench.TRAIN_SCENARIOS]


@pytest.fixture(scope="session")
def test_data():
    return bench.generate_dataset(bench.TEST_SCENARIO)


@pytest.fixture
def rng():
    return np.random.default_rng(7)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def verdict():
    """Record one pass/fail line for an acceptance criterion, then assert it."""

    def record(number, title, ok, detail):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
