import numpy as np
import pytest

from latticehom import ALSI10MG, VIRGIN, make_unit_cell

CELL_KINDS = ("triangular", "x_braced", "xp_braced")


@pytest.fixture
def mat():
    return ALSI10MG


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(params=CELL_KINDS)
def cell(request):
    return make_unit_cell(request.param, 1.0, 0.1, 1.0)


def virgin_states(cell):
    return tuple(VIRGIN for _ in range(cell.n_struts))
