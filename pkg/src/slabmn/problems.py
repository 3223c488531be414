"""Benchmark problems: plane source, source beam and a smooth Gaussian."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import erf

from .basis import NodalBasis

RHO_VAC = 1e-8
RHO_MIN = RHO_VAC / 10.0
PSI_VAC = RHO_VAC / 2.0

PERIODIC = "periodic"
DIRICHLET = "dirichlet"


class ProblemConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Grid1D:
    z_min: float
    z_max: float
    J: int

    def __post_init__(self):
        if self.J < 3:
            raise ProblemConfigError("grid needs at least 3 cells")
        if not self.z_max > self.z_min:
            raise ProblemConfigError("grid needs z_max > z_min")

    @property
    def dz(self) -> float:
        return (self.z_max - self.z_min) / self.J

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.z_min, self.z_max, self.J + 1)

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])


def _const(v: float) -> Callable:
    return lambda z: np.full(np.shape(z), float(v))


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    domain: tuple[float, float]
    t_end: float
    sigma_s: Callable
    sigma_a: Callable
    q_iso: Callable  # isotropic emission density Q(z)
    density: Callable  # grid -> (J,) initial cell-mean density (isotropic start)
    boundary: str = DIRICHLET
    psi_left: Callable | None = None  # mu -> psi; None means vacuum
    psi_right: Callable | None = None
    cell_divisor: int = 1
    normalize_boundary: bool = False  # scale boundary psi to unit density per quadrature

    def __post_init__(self):
        if not self.t_end > 0:
            raise ProblemConfigError("t_end must be positive")
        if self.boundary not in (PERIODIC, DIRICHLET):
            raise ProblemConfigError(f"unknown boundary kind {self.boundary!r}")

    def grid(self, J: int) -> Grid1D:
        if J % self.cell_divisor:
            raise ProblemConfigError(f"{self.name} needs the cell count divisible by {self.cell_divisor}")
        return Grid1D(self.domain[0], self.domain[1], J)

    def material(self, grid: Grid1D, nb: NodalBasis):
        """Cell-centred (sigma_s, sigma_a, <bQ>) arrays."""
        z = grid.centers
        ss = np.asarray(self.sigma_s(z), dtype=float)
        sa = np.asarray(self.sigma_a(z), dtype=float)
        if np.any(ss < 0) or np.any(sa < 0):
            raise ProblemConfigError("negative cross section")
        q = np.asarray(self.q_iso(z), dtype=float)[:, None] * nb.u_iso_unit
        return ss, sa, q

    def initial_density(self, grid: Grid1D) -> np.ndarray:
        return np.asarray(self.density(grid), dtype=float)

    def initial_moments(self, nb: NodalBasis, grid: Grid1D) -> np.ndarray:
        return self.initial_density(grid)[:, None] * nb.u_iso_unit / 2.0

    def boundary_values(self, mu: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """psi_b at the nodes ``mu`` on each side (vacuum where unset)."""
        out = []
        for psi in (self.psi_left, self.psi_right):
            if psi is None:
                out.append(np.full(len(mu), PSI_VAC))
                continue
            vals = np.asarray(psi(mu), dtype=float)
            if self.normalize_boundary:
                vals = vals / float(w @ vals)
            out.append(vals)
        return out[0], out[1]

    def boundary_moments(self, nb: NodalBasis) -> tuple[np.ndarray, np.ndarray]:
        """<b psi_b> on each side, evaluated with the model's own quadrature."""
        left, right = self.boundary_values(nb.mu, nb.w)
        return nb.moments_of(left[None, :])[0], nb.moments_of(right[None, :])[0]


# -- plane source ---------------------------------------------------------

def _plane_density(grid: Grid1D) -> np.ndarray:
    if grid.J % 2:
        raise ProblemConfigError("plane source needs an even number of cells")
    rho = np.full(grid.J, RHO_VAC)
    mid = grid.J // 2
    rho[mid - 1] += 0.5 / grid.dz
    rho[mid] += 0.5 / grid.dz
    return rho


def plane_source() -> ProblemSpec:
    return ProblemSpec(
        name="plane-source", domain=(-1.2, 1.2), t_end=1.0,
        sigma_s=_const(1.0), sigma_a=_const(0.0), q_iso=_const(0.0),
        density=_plane_density, boundary=DIRICHLET, cell_divisor=2,
    )


# -- source beam ----------------------------------------------------------

BEAM_WIDTH = 1e5


def beam_profile(mu) -> np.ndarray:
    return np.exp(-BEAM_WIDTH * (np.asarray(mu, dtype=float) - 1.0) ** 2)


def _beam_sigma_s(z):
    z = np.asarray(z, dtype=float)
    return np.where(z <= 1.0, 0.0, np.where(z <= 2.0, 2.0, 10.0))


def _beam_sigma_a(z):
    return np.where(np.asarray(z, dtype=float) <= 2.0, 1.0, 0.0)


def _beam_q(z):
    z = np.asarray(z, dtype=float)
    return np.where((z >= 1.0) & (z <= 1.5), 0.5, 0.0)


def _vacuum_density(grid: Grid1D) -> np.ndarray:
    return np.full(grid.J, RHO_VAC)


def source_beam() -> ProblemSpec:
    return ProblemSpec(
        name="source-beam", domain=(0.0, 3.0), t_end=2.5,
        sigma_s=_beam_sigma_s, sigma_a=_beam_sigma_a, q_iso=_beam_q,
        density=_vacuum_density, boundary=DIRICHLET, psi_left=beam_profile, cell_divisor=6,
        normalize_boundary=True,
    )


# -- smooth Gaussian ------------------------------------------------------

GAUSS_DOMAIN = (-1.0, 1.0)


def gaussian_cell_density(grid: Grid1D, width: float, images: int = 8) -> np.ndarray:
    """Exact cell averages of rho_vac plus the periodized N(0, width^2) density.

    Summing periodic images keeps the profile smooth across the periodic
    boundary; the total mass over one period is exactly 1.
    """
    e = grid.edges
    L = grid.z_max - grid.z_min
    s = width * math.sqrt(2.0)
    mass = np.zeros(grid.J)
    for k in range(-images, images + 1):
        mass += 0.5 * (erf((e[1:] - k * L) / s) - erf((e[:-1] - k * L) / s))
    return RHO_VAC + mass / grid.dz


def smooth_gaussian(width: float = 0.4, t_end: float = 0.5) -> ProblemSpec:
    if not width > 0:
        raise ProblemConfigError("Gaussian width must be positive")

    return ProblemSpec(
        name="smooth-gaussian", domain=GAUSS_DOMAIN, t_end=t_end,
        sigma_s=_const(1.0), sigma_a=_const(0.0), q_iso=_const(0.0),
        density=lambda grid: gaussian_cell_density(grid, width), boundary=PERIODIC,
    )


PROBLEMS = {
    "plane-source": plane_source,
    "source-beam": source_beam,
    "smooth-gaussian": smooth_gaussian,
}


def get_problem(name: str) -> ProblemSpec:
    try:
        return PROBLEMS[name]()
    except KeyError:
        raise ProblemConfigError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
