import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def reference_integrals():
    return dict(np.load(DATA / "reference_integrals.npz"))


@pytest.fixture(scope="session")
def three_cubes_solution():
    """The three-cube benchmark solved with the default variant D setup."""
    from calderon_bem.harness import solve_config, three_cubes_config

    start = time.perf_counter()
    solution = solve_config(three_cubes_config())
    solution.elapsed = time.perf_counter() - start
    return solution


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(acceptance.RESULTS):
        terminalreporter.write_line(acceptance.RESULTS[number])
