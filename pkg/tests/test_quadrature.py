import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from slabmn.quadrature import (QuadratureError, build_gauss_lobatto, integrate,
                               integrate_half_range, lobatto_reference, nodes_for_order)


def test_three_point_rule():
    rule = build_gauss_lobatto([-1.0, 1.0], num_nodes=3)
    np.testing.assert_allclose(rule.nodes, [-1.0, 0.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(rule.weights, [1 / 3, 4 / 3, 1 / 3], rtol=1e-14)


@pytest.mark.parametrize("m", [3, 4, 7, 12, 40, 100])
def test_interior_nodes_are_roots_of_legendre_derivative(m):
    x, w = lobatto_reference(m)
    dP = np.polynomial.legendre.Legendre.basis(m - 1).deriv()
    np.testing.assert_allclose(np.sort(dP.roots().real), x[1:-1], atol=1e-13)
    assert np.all(w > 0)
    assert math.isclose(w.sum(), 2.0, rel_tol=1e-14)


def test_mu_squared_and_constant():
    rule = build_gauss_lobatto([-1.0, 1.0], num_nodes=3)
    assert integrate(rule, lambda mu: mu ** 2) == pytest.approx(2 / 3, abs=1e-15)
    assert integrate(rule, lambda mu: 1.0) == pytest.approx(2.0, abs=1e-15)


def test_half_range_cubic():
    rule = build_gauss_lobatto([-1.0, 0.0, 1.0], num_nodes=4)
    assert integrate_half_range(rule, "+", lambda mu: mu ** 3) == pytest.approx(0.25, abs=1e-15)


def test_half_range_simple_values():
    rule = build_gauss_lobatto([-1.0, 0.0, 1.0], 15)
    assert integrate_half_range(rule, "+", lambda mu: mu) == pytest.approx(0.5, abs=1e-15)
    assert integrate_half_range(rule, "-", lambda mu: np.ones_like(mu)) == pytest.approx(1.0, abs=1e-15)
    assert integrate_half_range(rule, "+", lambda mu: mu * np.exp(mu)) == pytest.approx(1.0, abs=1e-13)


def test_exp_integral():
    rule = build_gauss_lobatto([-1.0, 0.0, 1.0], 15)
    assert integrate(rule, np.exp) == pytest.approx(2 * math.sinh(1.0), rel=1e-14)


def test_order_mapping():
    assert nodes_for_order(15) == 9
    assert nodes_for_order(197) == 100
    assert build_gauss_lobatto([-1.0, 0.0, 1.0], 15).order >= 15


@given(st.integers(3, 30), st.lists(st.floats(-1, 1), min_size=1, max_size=40),
       st.lists(st.floats(-0.9, 0.9), min_size=0, max_size=4, unique=True))
def test_polynomial_exactness(m, coef, inner):
    bp = np.unique(np.r_[-1.0, np.round(inner, 3), 1.0])
    rule = build_gauss_lobatto(bp, num_nodes=m)
    deg = 2 * m - 3
    p = np.polynomial.Polynomial(coef[: deg + 1])
    P = p.integ()
    exact = P(1.0) - P(-1.0)
    scale = max(1.0, float(np.max(np.abs(p(np.linspace(-1, 1, 201))))))
    assert abs(integrate(rule, p) - exact) <= 1e-13 * scale * max(1, len(coef))


@given(st.integers(3, 12))
def test_half_ranges_add_up(m):
    rule = build_gauss_lobatto([-1.0, -0.3, 0.0, 0.6, 1.0], num_nodes=m)
    f = lambda mu: np.cos(3 * mu) + mu ** 2
    plus = integrate_half_range(rule, "+", f)
    minus = integrate_half_range(rule, "-", f)
    assert plus + minus == pytest.approx(integrate(rule, f), rel=1e-15, abs=1e-15)


def test_weights_sum_to_interval_length():
    bp = [-1.0, -0.25, 0.0, 0.5, 1.0]
    rule = build_gauss_lobatto(bp, num_nodes=5)
    for (a, b), x, w in zip(zip(bp[:-1], bp[1:]), rule.interval_nodes, rule.interval_weights):
        assert x[0] == a and x[-1] == b
        assert w.sum() == pytest.approx(b - a, rel=1e-14)


@pytest.mark.parametrize("bp", [[-1.0, 0.5, 0.2, 1.0], [-0.9, 1.0], [-1.0, 0.9], [-1.0]])
def test_bad_breakpoints(bp):
    with pytest.raises(QuadratureError):
        build_gauss_lobatto(bp, num_nodes=3)


def test_half_range_needs_zero_breakpoint():
    rule = build_gauss_lobatto([-1.0, 1.0], num_nodes=5)
    with pytest.raises(QuadratureError):
        integrate_half_range(rule, "+", lambda mu: mu)


def test_non_finite_integrand():
    rule = build_gauss_lobatto([-1.0, 0.0, 1.0], num_nodes=3)
    with pytest.raises(QuadratureError):
        integrate(rule, lambda mu: 1.0 / mu)
