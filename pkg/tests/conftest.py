import numpy as np
import pytest

from gapline import Grid, sample_random_concave, sample_random_convex

CORPUS_SIZE = 50


def random_direction(seed: int, scale: float):
    """Seeded free piecewise-linear perturbation with 4 knots and values in [-scale, scale]."""
    from gapline.classes import make_piecewise_linear

    rng = np.random.default_rng(10_000 + seed)
    knots = np.concatenate(([0.0], np.sort(rng.uniform(0.2, np.pi - 0.2, 2)), [np.pi]))
    return make_piecewise_linear(knots, rng.uniform(-scale, scale, 4))


def corpus_member(seed: int):
    """(V in C_10, w in S_(1,3), dV, dw) for corpus index ``seed``."""
    V = sample_random_convex(seed, 10.0, 5)
    w = sample_random_concave(seed + 500, 1.0, 3.0, 5)
    return V, w, random_direction(seed, 1.0), random_direction(seed + 1, 0.5)


@pytest.fixture(scope="session")
def grid2000():
    return Grid(2000)


@pytest.fixture(scope="session")
def grid500():
    return Grid(500)


@pytest.fixture(scope="session")
def corpus():
    return [corpus_member(s) for s in range(CORPUS_SIZE)]


# acceptance criteria register one line each; printed at the end of the run
ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {number:2d} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
