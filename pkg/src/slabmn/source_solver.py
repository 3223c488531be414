"""Exact solution of the collision, absorption and emission substep.

With isotropic scattering the substep is the linear ODE
``u' = sigma_s G u - sigma_t u + <bQ>`` where ``G u = u_iso(rho(u))`` is a
rank-one projector.  Its matrix exponential is available in closed form, so
the step is exact for any step length and never forms ``G``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import BasisSpec

SMALL = 1e-8


@dataclass(frozen=True)
class MaterialState:
    sigma_s: float | np.ndarray
    sigma_a: float | np.ndarray
    Q_moments: np.ndarray | float = 0.0

    def __post_init__(self):
        if np.any(np.asarray(self.sigma_s) < 0) or np.any(np.asarray(self.sigma_a) < 0):
            raise ValueError("cross sections must be nonnegative")

    @property
    def sigma_t(self):
        return np.asarray(self.sigma_s) + np.asarray(self.sigma_a)


def _phi(sigma, t):
    """(1 - exp(-sigma t)) / sigma with its small-argument limit t."""
    sigma = np.asarray(sigma, dtype=float)
    x = sigma * t
    with np.errstate(divide="ignore", invalid="ignore"):
        val = -np.expm1(-x) / sigma
    # series keeps full accuracy for tiny sigma t
    series = t * (1.0 - x / 2.0 + x * x / 6.0)
    return np.where(np.abs(x) < SMALL, series, val)


def advance_moments(e: np.ndarray, iso_unit: np.ndarray, sigma_s, sigma_a, q, u0, t: float) -> np.ndarray:
    """Exact substep for any linear moment map with e^T b == 1.

    ``iso_unit`` is <b> (the moments of psi == 1), ``q`` is <bQ>; sigma arrays
    broadcast over a leading cell axis of ``u0``.
    """
    if t < 0:
        raise ValueError("source step needs t >= 0")
    u0 = np.asarray(u0, dtype=float)
    ss = np.asarray(sigma_s, dtype=float)
    sa = np.asarray(sigma_a, dtype=float)
    if u0.ndim == 2:
        ss = np.broadcast_to(ss, u0.shape[:1])[:, None]
        sa = np.broadcast_to(sa, u0.shape[:1])[:, None]
    st = ss + sa
    Gu = (u0 @ e)[..., None] * iso_unit / 2.0
    out = np.exp(-sa * t) * (np.exp(-ss * t) * u0 + (-np.expm1(-ss * t)) * Gu)
    q = np.asarray(q, dtype=float)
    if np.any(q != 0.0):
        q = np.broadcast_to(q, u0.shape)
        Gq = (q @ e)[..., None] * iso_unit / 2.0
        out = out + _phi(st, t) * (q - Gq) + _phi(sa, t) * Gq
    return out


def advance_source(spec: BasisSpec, state: MaterialState, u0, t: float,
                   iso_unit: np.ndarray | None = None) -> np.ndarray:
    iso = spec.u_iso_unit if iso_unit is None else iso_unit
    return advance_moments(spec.e_vector, iso, state.sigma_s, state.sigma_a, state.Q_moments, u0, t)


def source_rhs(spec: BasisSpec, state: MaterialState, u, iso_unit: np.ndarray | None = None) -> np.ndarray:
    """sigma_s u_iso(rho(u)) - sigma_t u + <bQ>."""
    iso = spec.u_iso_unit if iso_unit is None else iso_unit
    u = np.asarray(u, dtype=float)
    ss = np.asarray(state.sigma_s, dtype=float)
    sa = np.asarray(state.sigma_a, dtype=float)
    if u.ndim == 2:
        ss = np.broadcast_to(ss, u.shape[:1])[:, None]
        sa = np.broadcast_to(sa, u.shape[:1])[:, None]
    Gu = (u @ spec.e_vector)[..., None] * iso / 2.0
    return ss * Gu - (ss + sa) * u + np.asarray(state.Q_moments, dtype=float)
