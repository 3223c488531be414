import numpy as np
import pytest

from slabmn.lp import feasible_nonnegative, simplex


def test_small_lp():
    # min -x - y  s.t. x + 2y + s1 = 4, 3x + y + s2 = 6
    A = [[1, 2, 1, 0], [3, 1, 0, 1]]
    res = simplex([-1, -1, 0, 0], A, [4, 6])
    assert res.status == "optimal"
    assert res.objective == pytest.approx(-2.8)
    np.testing.assert_allclose(res.x[:2], [1.6, 1.2])


def test_infeasible_and_unbounded():
    assert simplex([0, 0], [[1, 1]], [-1]).status == "infeasible"
    assert simplex([-1, 0], [[1, -1]], [0]).status == "unbounded"


def test_cone_feasibility():
    B = np.array([[1.0, 1.0, 1.0], [-1.0, 0.0, 1.0]])
    assert feasible_nonnegative(B, np.array([1.0, 0.9]))
    assert feasible_nonnegative(B, np.array([1.0, 1.0 - 1e-8]))
    assert not feasible_nonnegative(B, np.array([1.0, 1.0 + 1e-8]))
    assert not feasible_nonnegative(B, np.zeros(2))
