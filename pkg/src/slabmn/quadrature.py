"""Composite Gauss-Lobatto quadrature on a partition of [-1, 1].

The ``order`` of a rule is its polynomial exactness degree.  A Lobatto rule
with ``m`` nodes per interval integrates polynomials up to degree ``2m - 3``
exactly, so ``m = ceil((order + 3) / 2)``.  Order 15 uses 9 nodes per
interval, order 197 uses 100.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class QuadratureError(ValueError):
    """Invalid quadrature configuration or non-finite integrand."""


def nodes_for_order(order: int) -> int:
    """Number of Lobatto nodes per interval needed for exactness ``order``."""
    if order < 1:
        raise QuadratureError(f"quadrature order must be >= 1, got {order}")
    return max(3, math.ceil((order + 3) / 2))


def order_for_nodes(num_nodes: int) -> int:
    return 2 * num_nodes - 3


def lobatto_reference(num_nodes: int, tol: float = 1e-15) -> tuple[np.ndarray, np.ndarray]:
    """Lobatto nodes and weights on [-1, 1], ascending.

    Interior nodes are roots of P'_{m-1}; found by Newton iteration on
    (1 - x^2) P'_{m-1}(x) starting from Chebyshev-Lobatto points.
    """
    m = int(num_nodes)
    if m < 2:
        raise QuadratureError("a Lobatto rule needs at least 2 nodes")
    N = m - 1
    x = np.cos(np.pi * np.arange(m) / N)
    P = np.zeros((m, m))
    x_old = x + 2.0
    for _ in range(100):
        if np.max(np.abs(x - x_old)) <= tol:
            break
        x_old = x.copy()
        P[:, 0] = 1.0
        P[:, 1] = x
        for k in range(1, N):
            P[:, k + 1] = ((2 * k + 1) * x * P[:, k] - k * P[:, k - 1]) / (k + 1)
        x = x_old - (x * P[:, N] - P[:, N - 1]) / (m * P[:, N])
    P[:, 0] = 1.0
    P[:, 1] = x
    for k in range(1, N):
        P[:, k + 1] = ((2 * k + 1) * x * P[:, k] - k * P[:, k - 1]) / (k + 1)
    w = 2.0 / (N * m * P[:, N] ** 2)
    x = x[::-1].copy()
    w = w[::-1].copy()
    # endpoints are exact by construction; pin them against round-off
    x[0], x[-1] = -1.0, 1.0
    if m % 2 == 1:
        x[m // 2] = 0.0
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    return x, w


@dataclass(frozen=True)
class QuadratureRule:
    """Composite rule; nodes at shared breakpoints are kept once per interval."""

    breakpoints: np.ndarray
    interval_nodes: tuple[np.ndarray, ...]
    interval_weights: tuple[np.ndarray, ...]
    # flattened views, interval-major
    nodes: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)
    interval_index: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        nodes = np.concatenate(self.interval_nodes)
        weights = np.concatenate(self.interval_weights)
        idx = np.concatenate(
            [np.full(len(x), i, dtype=int) for i, x in enumerate(self.interval_nodes)]
        )
        for arr in (nodes, weights, idx, self.breakpoints):
            arr.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "interval_index", idx)

    @property
    def num_intervals(self) -> int:
        return len(self.interval_nodes)

    @property
    def order(self) -> int:
        return order_for_nodes(min(len(x) for x in self.interval_nodes))

    def __len__(self) -> int:
        return len(self.nodes)

    def has_breakpoint(self, value: float) -> bool:
        return bool(np.any(self.breakpoints == value))

    def half_mask(self, sign: int) -> np.ndarray:
        """Boolean node mask of the intervals lying in mu >= 0 (sign > 0) or mu <= 0."""
        if not self.has_breakpoint(0.0):
            raise QuadratureError("half-range integration needs 0 as a breakpoint")
        left = self.breakpoints[self.interval_index]
        right = self.breakpoints[self.interval_index + 1]
        if sign > 0:
            return left >= 0.0
        return right <= 0.0


def build_gauss_lobatto(breakpoints, order: int | None = None, *,
                        num_nodes: int | None = None) -> QuadratureRule:
    """Lobatto rule on every interval of ``breakpoints``.

    Give either the exactness ``order`` or ``num_nodes`` per interval.
    """
    bp = np.asarray(breakpoints, dtype=float)
    if bp.ndim != 1 or len(bp) < 2:
        raise QuadratureError("need at least two breakpoints")
    if bp[0] != -1.0 or bp[-1] != 1.0:
        raise QuadratureError("breakpoints must start at -1 and end at 1")
    if np.any(np.diff(bp) <= 0):
        raise QuadratureError("breakpoints must be strictly increasing")
    if num_nodes is None:
        if order is None:
            raise QuadratureError("give order or num_nodes")
        num_nodes = nodes_for_order(order)
    if num_nodes < 3:
        raise QuadratureError("need at least 3 nodes per interval")
    x, w = lobatto_reference(num_nodes)
    nodes, weights = [], []
    for a, b in zip(bp[:-1], bp[1:]):
        half = 0.5 * (b - a)
        mid = 0.5 * (a + b)
        xi = mid + half * x
        xi[0], xi[-1] = a, b
        nodes.append(xi)
        weights.append(half * w)
    return QuadratureRule(bp.copy(), tuple(nodes), tuple(weights))


def _values(rule: QuadratureRule, f) -> np.ndarray:
    vals = np.asarray(f(rule.nodes), dtype=float)
    if vals.shape == ():
        vals = np.full(len(rule.nodes), float(vals))
    if not np.all(np.isfinite(vals)):
        raise QuadratureError("integrand is not finite at every node")
    return vals


def integrate(rule: QuadratureRule, f) -> float:
    """Sum of w_i f(mu_i); ``f`` is called once on the array of all nodes."""
    return float(np.dot(rule.weights, _values(rule, f)))


def integrate_half_range(rule: QuadratureRule, sign, f) -> float:
    """Quadrature restricted to mu >= 0 (``sign`` '+' or +1) or mu <= 0."""
    s = 1 if sign in ("+", 1, +1.0) else -1
    mask = rule.half_mask(s)
    vals = _values(rule, f)
    return float(np.dot(rule.weights[mask], vals[mask]))
