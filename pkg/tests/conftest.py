import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from vgne.synthetic import AffineData, affine_game, random_affine_data, random_affine_game


def scalar_data(H=1.0, B=0.0, Phi=0.0, c=0.0, A=1.0, b=0.0, N=1):
    """N scalar agents with identical data; ``A=None`` drops the constraint."""
    m = 0 if A is None else 1
    return AffineData(
        H=tuple(np.array([[H]]) for _ in range(N)),
        B=tuple(np.array([[B]]) for _ in range(N)),
        Phi=tuple(np.array([[Phi]]) for _ in range(N)),
        c=tuple(np.array([c]) for _ in range(N)),
        A=tuple(np.full((m, 1), 0.0 if A is None else A) for _ in range(N)),
        b=tuple(np.full(m, b / N) for _ in range(N)),
    )


@pytest.fixture
def scalar_game():
    """``F(x) = x``, ``A = [1]``, ``b = 0``."""
    return affine_game(scalar_data())


@pytest.fixture(scope="session")
def affine6():
    """Six agents, two variables each, two coupling rows, 2-d aggregate."""
    data = random_affine_data(6, 2, 2, 2, seed=1)
    return data, affine_game(data)


@pytest.fixture(scope="session")
def affine6_certified():
    return random_affine_game(6, 2, 2, 2, seed=1)


# -- acceptance summary ------------------------------------------------------

ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
