import math

import numpy as np
import pytest

from slabmn.closure import (ENTROPY, LINEAR, DegenerateState, characteristic_batch, decomposition_of,
                            eigendecompose, flux, jacobian, kinetic_flux, lax_friedrichs_flux,
                            make_closure)
from slabmn.entropy_solver import ansatz_moments
from slabmn.problems import PSI_VAC

from conftest import nodal


def test_isotropic_entropy_flux():
    nb = nodal("full", 2)
    rho = 3.0
    f = flux(make_closure(nb, ENTROPY), [math.log(rho / 2), 0.0])
    np.testing.assert_allclose(f, [0.0, rho / 3], atol=1e-14)


def test_linear_flux_n2():
    c = make_closure(nodal("full", 2), LINEAR)
    np.testing.assert_allclose(flux(c, [1.0, 0.0]), [0.0, 1 / 3], atol=1e-15)
    np.testing.assert_allclose(c.A, [[0, 1], [1 / 3, 0]], atol=1e-15)


def test_partial_flux_stays_in_block():
    nb = nodal("partial", 4)
    alpha = np.array([-40.0, 0.0, 0.3, 0.5])
    f = flux(make_closure(nb, ENTROPY), alpha)
    assert np.all(np.abs(f[:2]) < 1e-15)


def test_kinetic_flux_consistency(rng):
    for kind, n in [("full", 3), ("hat", 5), ("partial", 4)]:
        c = make_closure(nodal(kind, n), ENTROPY)
        a = rng.uniform(-1, 1, n)
        np.testing.assert_allclose(kinetic_flux(c, a, a), flux(c, a), atol=1e-14)
        lin = make_closure(nodal(kind, n), LINEAR)
        u = ansatz_moments(c.nb, a)
        np.testing.assert_allclose(kinetic_flux(lin, u, u), flux(lin, u), atol=1e-14)


def test_kinetic_flux_into_vacuum():
    nb = nodal("full", 3)
    c = make_closure(nb, ENTROPY)
    vac = np.array([math.log(PSI_VAC), 0.0, 0.0])
    f = kinetic_flux(c, [math.log(0.5), 0.0, 0.0], vac)
    assert f[0] == pytest.approx(0.25 - PSI_VAC / 2, abs=1e-14)


def test_linear_closure_reproduces_pn_half_range_split():
    nb = nodal("full", 4)
    c = make_closure(nb, LINEAR)
    np.testing.assert_allclose(c.A_pos + c.A_neg, c.A, atol=1e-14)


def test_lax_friedrichs():
    c = make_closure(nodal("full", 2), LINEAR)
    u = np.array([1.0, 0.2])
    np.testing.assert_allclose(lax_friedrichs_flux(c, u, u), flux(c, u))
    z = np.zeros(2)
    np.testing.assert_allclose(lax_friedrichs_flux(c, z, z + 0.0), 0.0)
    u2 = np.array([0.5, 0.0])
    expect = 0.5 * (flux(c, z) + flux(c, u2)) - 0.5 * (u2 - z)
    np.testing.assert_allclose(lax_friedrichs_flux(c, z, u2), expect)


def test_isotropic_jacobian():
    c = make_closure(nodal("full", 2), ENTROPY)
    J = jacobian(c, [0.0, 0.0])
    np.testing.assert_allclose(J, [[0, 1], [1 / 3, 0]], atol=1e-14)
    d = decomposition_of(c, [0.0, 0.0])
    np.testing.assert_allclose(d.lambdas, [-1 / math.sqrt(3), 1 / math.sqrt(3)], atol=1e-14)


def test_linear_jacobian_is_state_independent(rng):
    c = make_closure(nodal("hat", 4), LINEAR)
    np.testing.assert_array_equal(jacobian(c, rng.random(4)), c.A)


def test_eigendecompose_examples():
    d = eigendecompose(np.diag([3.0, -1.0]))
    np.testing.assert_allclose(np.abs(d.V), np.eye(2)[:, ::-1])
    d = eigendecompose(np.array([[0.0, 1.0], [1 / 3, 0.0]]))
    np.testing.assert_allclose(d.lambdas, [-1 / math.sqrt(3), 1 / math.sqrt(3)], atol=1e-15)
    with pytest.raises(DegenerateState):
        eigendecompose(np.array([[0.0, 1.0], [-1.0, 0.0]]))


def test_entropy_jacobian_by_finite_differences(rng):
    nb = nodal("full", 3)
    c = make_closure(nb, ENTROPY)
    a = rng.uniform(-1, 1, 3)
    from slabmn.entropy_solver import gradient_and_hessian
    _, H = gradient_and_hessian(nb, a, np.zeros(3))
    # dF/du = dF/dalpha H^-1
    h = 1e-6
    dF = np.column_stack([(flux(c, a + h * e) - flux(c, a - h * e)) / (2 * h) for e in np.eye(3)])
    np.testing.assert_allclose(jacobian(c, a), dF @ np.linalg.inv(H), atol=1e-7)


@pytest.mark.parametrize("kind,n", [("full", 5), ("hat", 6), ("partial", 6)])
def test_characteristic_residuals(kind, n, rng):
    c = make_closure(nodal(kind, n), ENTROPY)
    A = rng.uniform(-2, 2, (20, n))
    lam, V, Vi, ok = characteristic_batch(c, A)
    assert ok.all()
    J = jacobian(c, A)
    for k in range(20):
        np.testing.assert_allclose(J[k] @ V[k], V[k] * lam[k], atol=1e-11 * np.abs(J[k]).max())
        np.testing.assert_allclose(Vi[k] @ V[k], np.eye(n), atol=1e-11)
    assert np.all(np.abs(lam) <= 1 + 1e-12)


def test_mirror_symmetry():
    nb = nodal("full", 4)
    c = make_closure(nb, ENTROPY)
    a = np.array([0.2, 0.7, -0.4, 0.3])
    parity = np.array([1, -1, 1, -1])
    np.testing.assert_allclose(flux(c, a * parity), -parity * flux(c, a), atol=1e-13)
