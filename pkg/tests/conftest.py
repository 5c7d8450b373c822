import numpy as np
import pytest

from possdro.interval import LevelGrid
from possdro.possibility import BudgetInterval, FuzzyInterval, JointPossibilityModel

X_OPT = np.array([2.74, 3.3])


def worked_model(gamma=6.0) -> JointPossibilityModel:
    comps = [FuzzyInterval(3.0, 2.5, 2.5, 1.0, 0.32), FuzzyInterval(2.0, 1.0, 1.0, 1.0, 1.0)]
    return JointPossibilityModel(comps, [[2.0, 2.5], [1.0, -3.0]], BudgetInterval(gamma, 1.0))


def random_joint(rng, n, gamma=None, shapes=True, singular=False) -> JointPossibilityModel:
    comps = []
    for _ in range(n):
        z1, z2 = (rng.uniform(0.3, 3.0, 2) if shapes else (1.0, 1.0))
        comps.append(FuzzyInterval(rng.normal(), rng.uniform(0.2, 3.0), rng.uniform(0.2, 3.0), z1, z2))
    B = rng.normal(size=(n, n))
    if singular and n > 1:
        B[-1] = B[0]
    g = rng.uniform(0.5, 5.0) if gamma is None else gamma
    return JointPossibilityModel(comps, B, BudgetInterval(g, rng.uniform(0.5, 2.0) if shapes else 1.0))


def random_degrees(rng, K):
    kind = rng.integers(0, 3)
    if kind == 0:
        d = rng.choice([0.0, 0.2, 0.5, 0.8, 1.0], K)
    elif kind == 1:
        d = rng.uniform(0, 1, K)
    else:
        d = np.round(rng.uniform(0, 1, K), 1)
    d[rng.integers(K)] = 1.0
    return d


# acceptance verdict lines, echoed in the terminal summary
ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def worked():
    return worked_model()


@pytest.fixture
def grid2():
    return LevelGrid(2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
