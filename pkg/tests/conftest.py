import numpy as np
import pytest
from hypothesis import settings

from slabmn.basis import full_basis, hat_basis, make_nodal_basis, partial_basis

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def nodal(kind, n, order=15):
    if kind == "full":
        spec = full_basis(n - 1)
    elif kind == "monomial":
        spec = full_basis(n - 1, legendre=False)
    elif kind == "hat":
        spec = hat_basis(n)
    else:
        spec = partial_basis(n)
    return make_nodal_basis(spec, order)
