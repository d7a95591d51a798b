import numpy as np
import pytest

from artifact.estimators import Assignment, Population
from artifact.martingale import RevealOrder


@pytest.fixture
def toy():
    """n = 4, y1 = (1,2,3,4), y0 = 0, treated {1,2} (0-based {0,1}), reveal 1,2,3,4."""
    pop = Population(np.zeros((4, 1)), [1, 2, 3, 4], [0, 0, 0, 0])
    return pop, Assignment((0, 1), 4), RevealOrder((0, 1, 2, 3), 4, 2)


def random_population(rng, n, p):
    return Population(rng.standard_normal((n, p)), rng.standard_normal(n), rng.standard_normal(n))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(lines):
        terminalreporter.write_line(lines[cid])
