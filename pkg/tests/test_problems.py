import math

import numpy as np
import pytest

from slabmn.basis import full_basis, make_nodal_basis
from slabmn.problems import (RHO_VAC, ProblemConfigError, get_problem, plane_source,
                             smooth_gaussian, source_beam)


def test_plane_source_initial_condition():
    p = plane_source()
    g = p.grid(600)
    rho = p.initial_density(g)
    assert rho[299] == rho[300] == pytest.approx(RHO_VAC + 0.5 / g.dz)
    others = np.delete(rho, [299, 300])
    assert np.all(others == RHO_VAC)
    assert rho.sum() * g.dz == pytest.approx(1 + 2.4 * RHO_VAC, abs=1e-14)


def test_plane_source_needs_even_cells():
    with pytest.raises(ProblemConfigError):
        plane_source().grid(301)


def test_source_beam_materials_and_grid():
    p = source_beam()
    assert p.sigma_s(np.array([2.5]))[0] == 10.0
    assert p.sigma_a(np.array([2.5]))[0] == 0.0
    assert p.sigma_s(np.array([0.5]))[0] == 0.0
    assert p.sigma_a(np.array([1.5]))[0] == 1.0
    assert p.q_iso(np.array([1.25]))[0] == 0.5
    e = p.grid(240).edges
    for x in (1.0, 1.5, 2.0):
        assert np.min(np.abs(e - x)) < 1e-13
    with pytest.raises(ProblemConfigError):
        p.grid(100)


def test_beam_boundary_density_is_one():
    nb = make_nodal_basis(full_basis(7), 197)
    left, right = source_beam().boundary_moments(nb)
    assert left[0] == pytest.approx(1.0, rel=1e-14)
    assert right[0] == pytest.approx(RHO_VAC, rel=1e-14)


def test_gaussian_mass_and_symmetry():
    p = smooth_gaussian()
    g = p.grid(200)
    rho = p.initial_density(g)
    assert rho.sum() * g.dz == pytest.approx(1.0 + 2.0 * RHO_VAC, abs=1e-12)
    np.testing.assert_allclose(rho, rho[::-1], rtol=1e-13)


def test_gaussian_cell_average_against_point_quadrature():
    # narrow enough that the images do not matter
    p = smooth_gaussian(width=0.1)
    g = p.grid(50)
    rho = p.initial_density(g)
    j = 25
    a, b = g.edges[j], g.edges[j + 1]
    x, w = np.polynomial.legendre.leggauss(20)
    z = 0.5 * (b - a) * x + 0.5 * (a + b)
    pdf = np.exp(-z ** 2 / (2 * 0.01)) / math.sqrt(2 * math.pi * 0.01)
    assert rho[j] - RHO_VAC == pytest.approx(0.5 * (w @ pdf), rel=1e-12)


def test_bad_problem_parameters():
    with pytest.raises(ProblemConfigError):
        smooth_gaussian(width=0.0)
    with pytest.raises(ProblemConfigError):
        get_problem("checkerboard")
