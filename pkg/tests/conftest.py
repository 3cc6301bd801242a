import numpy as np
import pytest

from configgp.design import map_ranges, maxpro
from configgp.gp import Dataset
from configgp.testbed import simulate


def currin_dataset(n=20, seed=0, fidelity=(0.1, 0.4)):
    D = map_ranges(maxpro(n, 4, seed=seed, proposals=500, n_inputs=2), [(0, 1), (0, 1), fidelity, fidelity])
    return Dataset(D.inputs, D.fidelities, simulate("currin", D.inputs, D.fidelities))


@pytest.fixture(scope="session")
def small_currin():
    return currin_dataset()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = {}


@pytest.fixture
def report_criterion():
    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[str(number)] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
