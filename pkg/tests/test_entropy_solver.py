import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from slabmn.entropy_solver import (NewtonConfig, OptimizationFailure, ansatz_density, ansatz_moments,
                                   dual_objective, gradient_and_hessian, solve, solve_batch,
                                   structured_hessian, tridiag_to_dense)

from conftest import nodal


def test_constant_ansatz():
    nb = nodal("full", 2)
    np.testing.assert_allclose(ansatz_moments(nb, [0.0, 0.0]), [2.0, 0.0], atol=1e-15)


@pytest.mark.parametrize("a", [1.0, -0.3, 2.5, 7.0])
def test_langevin_ratio(a):
    nb = nodal("full", 2, order=41)
    u = ansatz_moments(nb, [0.0, a])
    exact = 1.0 / math.tanh(a) - 1.0 / a
    assert u[1] / u[0] == pytest.approx(exact, rel=1e-12)
    assert u[0] == pytest.approx(2 * math.sinh(a) / a, rel=1e-12)


def test_langevin_at_one():
    nb = nodal("full", 2, order=41)
    u = ansatz_moments(nb, [0.0, 1.0])
    assert u[1] / u[0] == pytest.approx(0.3130352855, abs=1e-9)


def test_hat_constant_multiplier():
    nb = nodal("hat", 5)
    c = 0.7
    np.testing.assert_allclose(ansatz_moments(nb, c * np.ones(5)),
                               math.exp(c) * nb.u_iso_unit, rtol=1e-14)


def test_isotropic_gradient_and_hessian():
    nb = nodal("full", 2)
    g, H = gradient_and_hessian(nb, [0.0, 0.0], nb.u_iso_unit)
    np.testing.assert_allclose(g, 0.0, atol=1e-15)
    np.testing.assert_allclose(H, np.diag([2.0, 2 / 3]), atol=1e-14)


@pytest.mark.parametrize("kind,n", [("full", 4), ("monomial", 3), ("hat", 6), ("partial", 6)])
def test_gradient_and_hessian_by_finite_differences(kind, n, rng):
    nb = nodal(kind, n)
    alpha = rng.uniform(-1, 1, n)
    u = ansatz_moments(nb, rng.uniform(-1, 1, n))
    g, H = gradient_and_hessian(nb, alpha, u)
    h = 1e-6
    for i in range(n):
        d = np.zeros(n)
        d[i] = h
        fd = (dual_objective(nb, alpha + d, u) - dual_objective(nb, alpha - d, u)) / (2 * h)
        assert fd == pytest.approx(g[i], abs=1e-7 * (1 + abs(g[i])))
        gp, _ = gradient_and_hessian(nb, alpha + d, u)
        gm, _ = gradient_and_hessian(nb, alpha - d, u)
        np.testing.assert_allclose((gp - gm) / (2 * h), H[:, i], atol=1e-6 * np.abs(H).max())


@pytest.mark.parametrize("kind,n", [("hat", 7), ("partial", 8), ("full", 3)])
def test_structured_hessian_matches_dense(kind, n, rng):
    nb = nodal(kind, n)
    alpha = rng.uniform(-1, 1, (3, n))
    _, H = gradient_and_hessian(nb, alpha, np.zeros((3, n)))
    S = structured_hessian(nb, np.exp(nb.exponent(alpha)))
    dense = S[1] if S[0] == "dense" else tridiag_to_dense(S[1], S[2])
    np.testing.assert_allclose(dense, H, atol=1e-13)


@pytest.mark.parametrize("kind,n", [("full", 1), ("full", 5), ("hat", 8), ("partial", 10)])
@pytest.mark.parametrize("rho", [1e-8, 0.3, 2.0, 50.0])
def test_isotropic_fixed_point(kind, n, rho):
    nb = nodal(kind, n)
    rep = solve(nb, rho * nb.u_iso_unit / 2.0)
    np.testing.assert_allclose(rep.alpha, math.log(rho / 2.0) * nb.spec.e_vector, atol=1e-12)
    assert rep.iterations <= 1
    assert rep.regularization_r == 0.0


def test_near_boundary_keeps_density():
    nb = nodal("full", 2)
    cfg = NewtonConfig()
    rep = solve(nb, np.array([1.0, 0.99]), cfg)
    assert rep.converged
    assert rep.regularization_r in cfg.reg_ladder
    assert ansatz_density(nb, rep.alpha) == pytest.approx(1.0, rel=1e-12)
    assert rep.moments[0] == pytest.approx(1.0, rel=1e-12)


def test_nonpositive_density_rejected():
    with pytest.raises(OptimizationFailure):
        solve(nodal("full", 2), np.array([0.0, 0.0]))


def test_bad_ladder_rejected():
    with pytest.raises(ValueError):
        NewtonConfig(reg_ladder=(0.0, 0.5))


@given(st.sampled_from([("full", 2), ("full", 4), ("hat", 5), ("partial", 6)]),
       st.integers(0, 2 ** 31), st.floats(1e-6, 1e3))
def test_round_trip(kn, seed, scale):
    kind, n = kn
    nb = nodal(kind, n)
    rng = np.random.default_rng(seed)
    a_star = rng.uniform(-1, 1, n)
    u = ansatz_moments(nb, a_star)
    u = u * scale / float(u @ nb.spec.e_vector)
    rep = solve(nb, u)
    rho = float(u @ nb.spec.e_vector)
    assert rep.regularization_r == 0.0
    assert np.linalg.norm(ansatz_moments(nb, rep.alpha) - u) <= 1e-9 * rho * (1 + np.linalg.norm(u / rho))
    assert ansatz_density(nb, rep.alpha) == pytest.approx(rho, rel=1e-12)


def test_batch_is_independent_of_threads_and_composition(rng):
    nb = nodal("hat", 6)
    U = ansatz_moments(nb, rng.uniform(-2, 2, (1500, 6)))
    a = solve_batch(nb, U, threads=1)
    b = solve_batch(nb, U, threads=4)
    np.testing.assert_array_equal(a.alpha, b.alpha)
    single = solve(nb, U[700])
    np.testing.assert_allclose(single.alpha, a.alpha[700], atol=1e-10)


def test_hard_beam_state_converges():
    nb = nodal("full", 8, order=197)
    psi = np.exp(-1e5 * (nb.mu - 1.0) ** 2)
    u = nb.moments_of(psi[None, :])[0]
    u = u / u[0] + 1e-8 * nb.u_iso_unit / 2.0
    rep = solve(nb, u)
    assert rep.converged
    assert rep.moments[0] == pytest.approx(u[0], rel=1e-12)
