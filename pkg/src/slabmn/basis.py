"""Angular bases in slab geometry.

Three families are supported: full moments (monomials or Legendre
polynomials), hat functions (continuous piecewise-linear) and partial
moments (``(1, mu)`` on each interval of an angular partition).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .quadrature import QuadratureRule, build_gauss_lobatto

FULL_LEGENDRE = "full-legendre"
FULL_MONOMIAL = "full-monomial"
HAT = "hat"
PARTIAL = "partial"
KINDS = (FULL_LEGENDRE, FULL_MONOMIAL, HAT, PARTIAL)


class BasisError(ValueError):
    pass


def legendre_values(mu, N: int) -> np.ndarray:
    """P_0..P_N at ``mu``; returns shape mu.shape + (N+1,)."""
    mu = np.asarray(mu, dtype=float)
    out = np.empty(mu.shape + (N + 1,))
    out[..., 0] = 1.0
    if N >= 1:
        out[..., 1] = mu
    for l in range(1, N):
        out[..., l + 1] = ((2 * l + 1) * mu * out[..., l] - l * out[..., l - 1]) / (l + 1)
    return out


@dataclass(frozen=True)
class BasisSpec:
    kind: str
    n: int
    grid: np.ndarray  # hat: nodes; partial: interval breakpoints; full: (-1, 0, 1)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise BasisError(f"unknown basis kind {self.kind!r}")
        grid = np.asarray(self.grid, dtype=float)
        if grid[0] != -1.0 or grid[-1] != 1.0 or np.any(np.diff(grid) <= 0):
            raise BasisError("angular grid must increase strictly from -1 to 1")
        object.__setattr__(self, "grid", grid)
        grid.setflags(write=False)
        if self.kind == HAT and len(grid) != self.n:
            raise BasisError("hat basis needs one grid node per moment")
        if self.kind == PARTIAL and 2 * (len(grid) - 1) != self.n:
            raise BasisError("partial basis needs n = 2 * number of intervals")
        if self.kind in (FULL_LEGENDRE, FULL_MONOMIAL) and self.n < 1:
            raise BasisError("full basis needs n >= 1")

    @property
    def is_full(self) -> bool:
        return self.kind in (FULL_LEGENDRE, FULL_MONOMIAL)

    @property
    def order(self) -> int:
        return self.n - 1

    @cached_property
    def e_vector(self) -> np.ndarray:
        """Coefficients with e^T b(mu) == 1."""
        e = np.zeros(self.n)
        if self.kind == HAT:
            e[:] = 1.0
        elif self.kind == PARTIAL:
            e[0::2] = 1.0
        else:
            e[0] = 1.0
        return e

    @cached_property
    def quadrature_breakpoints(self) -> np.ndarray:
        """Partition used for quadrature: basis breakpoints plus mu = 0."""
        if self.is_full:
            return np.array([-1.0, 0.0, 1.0])
        return np.union1d(self.grid, [0.0])

    @cached_property
    def u_iso_unit(self) -> np.ndarray:
        """<b>, i.e. the isotropic moment of psi == 1 (density 2)."""
        rule = build_gauss_lobatto(self.quadrature_breakpoints, num_nodes=max(3, self.n + 2))
        return rule.weights @ evaluate_on_nodes(self, rule)

    @cached_property
    def mass_matrix(self) -> np.ndarray:
        """<b b^T> evaluated exactly (all entries are polynomial integrals)."""
        rule = build_gauss_lobatto(self.quadrature_breakpoints, num_nodes=max(3, self.n + 3))
        B = evaluate_on_nodes(self, rule)
        return (B * rule.weights[:, None]).T @ B


def full_basis(N: int, legendre: bool = True) -> BasisSpec:
    return BasisSpec(FULL_LEGENDRE if legendre else FULL_MONOMIAL, N + 1, np.array([-1.0, 0.0, 1.0]))


def hat_basis(n: int, nodes=None) -> BasisSpec:
    if nodes is None:
        if n < 2:
            raise BasisError("hat basis needs n >= 2")
        nodes = np.linspace(-1.0, 1.0, n)
    return BasisSpec(HAT, n, np.asarray(nodes, dtype=float))


def partial_basis(n: int, breakpoints=None) -> BasisSpec:
    if breakpoints is None:
        if n < 2 or n % 2:
            raise BasisError("partial basis needs an even n >= 2")
        breakpoints = np.linspace(-1.0, 1.0, n // 2 + 1)
    return BasisSpec(PARTIAL, n, np.asarray(breakpoints, dtype=float))


def _interval_of(grid: np.ndarray, mu: float, side: int) -> int:
    k = len(grid) - 1
    if side >= 0:
        j = int(np.searchsorted(grid, mu, side="right")) - 1
    else:
        j = int(np.searchsorted(grid, mu, side="left")) - 1
    return min(max(j, 0), k - 1)


def evaluate_basis(spec: BasisSpec, mu: float, side: int = 1) -> np.ndarray:
    """b(mu).  At a shared breakpoint, ``side`` picks the interval (+1 right, -1 left)."""
    mu = float(mu)
    if not -1.0 <= mu <= 1.0:
        raise BasisError(f"mu={mu} outside [-1, 1]")
    if spec.kind == FULL_LEGENDRE:
        return legendre_values(mu, spec.n - 1)
    if spec.kind == FULL_MONOMIAL:
        return mu ** np.arange(spec.n)
    j = _interval_of(spec.grid, mu, side)
    a, b = spec.grid[j], spec.grid[j + 1]
    out = np.zeros(spec.n)
    if spec.kind == HAT:
        out[j] = (mu - b) / (a - b)
        out[j + 1] = (mu - a) / (b - a)
    else:
        out[2 * j] = 1.0
        out[2 * j + 1] = mu
    return out


def local_structure(spec: BasisSpec, rule: QuadratureRule) -> tuple[np.ndarray, np.ndarray]:
    """For hat/partial bases: the two nonzero basis values per node and their indices.

    Each quadrature interval lies inside one basis interval ``j``; a node there
    only sees basis functions (j, j+1) for hats and (2j, 2j+1) for partial moments.
    """
    if spec.is_full:
        raise BasisError("full bases have no local structure")
    mid = 0.5 * (rule.breakpoints[:-1] + rule.breakpoints[1:])
    basis_interval = np.searchsorted(spec.grid, mid) - 1
    j = basis_interval[rule.interval_index]
    mu = rule.nodes
    vals = np.empty((len(mu), 2))
    if spec.kind == HAT:
        a, b = spec.grid[j], spec.grid[j + 1]
        vals[:, 0] = (mu - b) / (a - b)
        vals[:, 1] = (mu - a) / (b - a)
        idx = np.stack([j, j + 1], axis=1)
    else:
        vals[:, 0] = 1.0
        vals[:, 1] = mu
        idx = np.stack([2 * j, 2 * j + 1], axis=1)
    return vals, idx


def evaluate_on_nodes(spec: BasisSpec, rule: QuadratureRule) -> np.ndarray:
    """Matrix B with B[i] = b(mu_i), interval-directed at breakpoints."""
    mu = rule.nodes
    if spec.kind == FULL_LEGENDRE:
        return legendre_values(mu, spec.n - 1)
    if spec.kind == FULL_MONOMIAL:
        return mu[:, None] ** np.arange(spec.n)[None, :]
    vals, idx = local_structure(spec, rule)
    B = np.zeros((len(mu), spec.n))
    rows = np.arange(len(mu))
    B[rows, idx[:, 0]] = vals[:, 0]
    B[rows, idx[:, 1]] = vals[:, 1]
    return B


def density(spec: BasisSpec, u) -> np.ndarray | float:
    """rho = <psi> read off the moments; works on (..., n) arrays."""
    return np.asarray(u, dtype=float) @ spec.e_vector


def isotropic_moment(spec: BasisSpec, rho) -> np.ndarray:
    """Isotropic moment vector with density ``rho``; broadcasts over arrays."""
    rho_arr = np.asarray(rho, dtype=float)
    if np.any(rho_arr <= 0):
        raise BasisError("isotropic moment needs rho > 0")
    return rho_arr[..., None] * spec.u_iso_unit / 2.0


def legendre_to_monomial(N: int) -> np.ndarray:
    """T with P(mu) = T @ (1, mu, ..., mu^N); lower triangular."""
    T = np.zeros((N + 1, N + 1))
    for l in range(N + 1):
        coef = np.polynomial.legendre.leg2poly(np.eye(N + 1)[l])
        T[l, : len(coef)] = coef
    return T


@dataclass(frozen=True)
class NodalBasis:
    """A basis paired with the quadrature used to evaluate all angular integrals."""

    spec: BasisSpec
    rule: QuadratureRule
    B: np.ndarray = field(init=False, repr=False)
    local_vals: np.ndarray | None = field(init=False, repr=False)
    local_idx: np.ndarray | None = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "B", evaluate_on_nodes(self.spec, self.rule))
        if self.spec.is_full:
            object.__setattr__(self, "local_vals", None)
            object.__setattr__(self, "local_idx", None)
        else:
            vals, idx = local_structure(self.spec, self.rule)
            object.__setattr__(self, "local_vals", vals)
            object.__setattr__(self, "local_idx", idx)

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def mu(self) -> np.ndarray:
        return self.rule.nodes

    @property
    def w(self) -> np.ndarray:
        return self.rule.weights

    @cached_property
    def pos(self) -> np.ndarray:
        return self.rule.half_mask(+1)

    @cached_property
    def neg(self) -> np.ndarray:
        return self.rule.half_mask(-1)

    @cached_property
    def u_iso_unit(self) -> np.ndarray:
        """Quadrature version of <b>; equals the exact one for rules of order >= 1."""
        return self.w @ self.B

    @cached_property
    def mass_matrix(self) -> np.ndarray:
        return (self.B * self.w[:, None]).T @ self.B

    @cached_property
    def flux_mass_matrix(self) -> np.ndarray:
        return (self.B * (self.w * self.mu)[:, None]).T @ self.B

    def half_flux_mass_matrix(self, sign: int) -> np.ndarray:
        mask = self.pos if sign > 0 else self.neg
        Bm = self.B[mask]
        return (Bm * (self.w * self.mu)[mask][:, None]).T @ Bm

    def exponent(self, alpha: np.ndarray) -> np.ndarray:
        """b(mu_i)^T alpha for every node; alpha has shape (m, n)."""
        if self.local_idx is None:
            return alpha @ self.B.T
        return (alpha[:, self.local_idx[:, 0]] * self.local_vals[:, 0]
                + alpha[:, self.local_idx[:, 1]] * self.local_vals[:, 1])

    def moments_of(self, psi: np.ndarray, weight: np.ndarray | None = None) -> np.ndarray:
        """sum_i w_i psi_i b(mu_i) for nodal values psi of shape (m, Q)."""
        ww = self.w if weight is None else self.w * weight
        wp = psi * ww
        if self.local_idx is None:
            return wp @ self.B
        out = np.zeros((psi.shape[0], self.n))
        for c in (0, 1):
            contrib = wp * self.local_vals[:, c]
            _scatter_add(out, self.local_idx[:, c], contrib)
        return out


def _scatter_add(out: np.ndarray, idx: np.ndarray, contrib: np.ndarray) -> None:
    """out[:, idx[q]] += contrib[:, q], summing in node order for determinism."""
    # idx is nondecreasing (interval-major), so a cumulative sum per segment works
    order_ok = np.all(np.diff(idx) >= 0)
    if not order_ok:
        for q in range(len(idx)):
            out[:, idx[q]] += contrib[:, q]
        return
    starts = np.flatnonzero(np.r_[True, np.diff(idx) != 0])
    sums = np.add.reduceat(contrib, starts, axis=1)
    out[:, idx[starts]] += sums


def make_nodal_basis(spec: BasisSpec, order: int) -> NodalBasis:
    return NodalBasis(spec, build_gauss_lobatto(spec.quadrature_breakpoints, order))
