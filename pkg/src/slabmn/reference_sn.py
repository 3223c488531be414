"""Discrete-ordinates reference solver and error norms.

Each ordinate is transported by an upwind finite-volume scheme (optionally
with positivity-limited minmod slopes and Heun's method); scattering and
emission are handled by the same exact source step as the moment models,
applied to the weighted ordinate values ``w_m psi_m``.

Cache files are CSV: ``#``-prefixed ``key=value`` header lines (problem, M,
J, t_end, second_order) followed by a ``z,rho`` table.
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fv_scheme import cfl_dt, minmod
from .problems import PERIODIC, Grid1D, ProblemSpec
from .realizability import limit_hat
from .source_solver import advance_moments

DEFAULT_M = 256
REFINEMENT = 8


@dataclass(frozen=True)
class OrdinateSet:
    mu: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        if np.any(self.mu == 0.0):
            raise ValueError("ordinates must not include mu = 0")
        if abs(self.w.sum() - 2.0) > 1e-12:
            raise ValueError("ordinate weights must sum to 2")

    @property
    def M(self) -> int:
        return len(self.mu)


def gauss_legendre_ordinates(M: int = DEFAULT_M) -> OrdinateSet:
    if M < 2 or M % 2:
        raise ValueError("use an even number of ordinates")
    mu, w = np.polynomial.legendre.leggauss(M)
    mu = 0.5 * (mu - mu[::-1])
    w = 0.5 * (w + w[::-1])
    return OrdinateSet(mu, w)


class _SN:
    def __init__(self, problem: ProblemSpec, grid: Grid1D, ords: OrdinateSet, second_order: bool):
        self.problem = problem
        self.grid = grid
        self.ords = ords
        self.second_order = second_order
        z = grid.centers
        self.ss = np.asarray(problem.sigma_s(z), dtype=float)
        self.sa = np.asarray(problem.sigma_a(z), dtype=float)
        q = np.asarray(problem.q_iso(z), dtype=float)
        # weighted variables v[j, m] = w_m psi_m; isotropic unit moment is w
        self.q = q[:, None] * ords.w[None, :]
        self.has_source = bool(np.any(self.ss) or np.any(self.sa) or np.any(q))
        left, right = problem.boundary_values(ords.mu, ords.w)
        self.ghost = np.vstack([left * ords.w, right * ords.w])
        self.pos = ords.mu > 0

    def initial(self) -> np.ndarray:
        rho = self.problem.initial_density(self.grid)
        return rho[:, None] * self.ords.w[None, :] / 2.0

    def _ext(self, V):
        if self.problem.boundary == PERIODIC:
            return np.vstack([V[-1:], V, V[:1]])
        return np.vstack([self.ghost[:1], V, self.ghost[1:]])

    def rhs(self, V):
        E = self._ext(V)
        if self.second_order:
            h = 0.5 * minmod(E[2:] - E[1:-1], E[1:-1] - E[:-2], 0.5 * (E[2:] - E[:-2]))
            lo, hi = V - h, V + h
            th = np.maximum(limit_hat(lo[..., None], V[..., None], 0.0),
                            limit_hat(hi[..., None], V[..., None], 0.0))
            h = h * (1.0 - th)
            lo, hi = V - h, V + h
        else:
            lo, hi = V, V
        if self.problem.boundary == PERIODIC:
            left = np.vstack([hi[-1:], hi])
            right = np.vstack([lo, lo[:1]])
        else:
            left = np.vstack([self.ghost[:1], hi])
            right = np.vstack([lo, self.ghost[1:]])
        mu = self.ords.mu
        F = np.where(self.pos, mu * left, mu * right)
        return (F[:-1] - F[1:]) / self.grid.dz

    def transport(self, V, dt):
        V1 = V + dt * self.rhs(V)
        if not self.second_order:
            return V1
        return 0.5 * V + 0.5 * (V1 + dt * self.rhs(V1))

    def source(self, V, dt):
        if not self.has_source:
            return V
        e = np.ones(self.ords.M)
        return advance_moments(e, self.ords.w, self.ss, self.sa, self.q, V, dt)


def solve_sn(problem: ProblemSpec, grid: Grid1D, ords: OrdinateSet | None = None,
             t_end: float | None = None, second_order: bool = True,
             safety: float = 0.99, return_psi: bool = False):
    """Per-cell density sum_m w_m psi_m at ``t_end``."""
    ords = ords or gauss_legendre_ordinates()
    t_end = problem.t_end if t_end is None else float(t_end)
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    s = _SN(problem, grid, ords, second_order)
    V = s.initial()
    # |mu| < 1 so the moment-scheme bound is also a transport CFL bound
    dt_max = cfl_dt(grid.dz, 0.0, 1, safety) / max(1.0, float(np.max(np.abs(ords.mu))))
    t = 0.0
    while t < t_end:
        dt = min(dt_max, t_end - t)
        V = s.source(V, 0.5 * dt)
        V = s.transport(V, dt)
        V = s.source(V, 0.5 * dt)
        t = t_end if dt == t_end - t else t + dt
    rho = V.sum(axis=1)
    if return_psi:
        return rho, V / ords.w[None, :]
    return rho


def cell_average(rho_fine: np.ndarray, J: int) -> np.ndarray:
    if len(rho_fine) % J:
        raise ValueError(f"reference grid of {len(rho_fine)} cells is not a multiple of {J}")
    return rho_fine.reshape(J, -1).mean(axis=1)


def error_norms(rho_model, rho_ref, domain_length: float) -> tuple[float, float]:
    """(L1, Linf) of rho_model minus the reference averaged onto the model grid."""
    rho_model = np.asarray(rho_model, dtype=float)
    ref = cell_average(np.asarray(rho_ref, dtype=float), len(rho_model))
    d = np.abs(rho_model - ref)
    return float(d.sum() * domain_length / len(rho_model)), float(d.max())


# -- cache -------------------------------------------------------------------

def default_cache_dir() -> Path:
    return Path(os.environ.get("SLABMN_CACHE", Path.home() / ".cache" / "slabmn"))


def _cache_key(problem: str, M: int, J: int, t_end: float, second_order: bool) -> str:
    raw = f"{problem}|{M}|{J}|{t_end!r}|{int(second_order)}"
    return hashlib.sha256(raw.encode()).hexdigest()[:16]


def cache_path(cache_dir, problem: str, M: int, J: int, t_end: float, second_order: bool = True) -> Path:
    key = _cache_key(problem, M, J, t_end, second_order)
    return Path(cache_dir) / f"sn-{problem}-M{M}-J{J}-{key}.csv"


def write_profile(path, z, rho, meta: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        for k, v in meta.items():
            fh.write(f"# {k}={v}\n")
        fh.write("z,rho\n")
        for a, b in zip(z, rho):
            fh.write(f"{a:.17g},{b:.17g}\n")
    os.replace(tmp, path)


def read_profile(path) -> tuple[dict, np.ndarray, np.ndarray]:
    meta = {}
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k] = v
            elif line and not line.startswith("z,"):
                a, b = line.split(",")
                rows.append((float(a), float(b)))
    arr = np.array(rows)
    return meta, arr[:, 0], arr[:, 1]


def reference_density(problem: ProblemSpec, J_ref: int, M: int = DEFAULT_M,
                      t_end: float | None = None, cache_dir=None, second_order: bool = True) -> np.ndarray:
    """Cached S_N density on ``J_ref`` cells."""
    t_end = problem.t_end if t_end is None else float(t_end)
    cache_dir = default_cache_dir() if cache_dir is None else Path(cache_dir)
    path = cache_path(cache_dir, problem.name, M, J_ref, t_end, second_order)
    if path.exists():
        return read_profile(path)[2]
    grid = problem.grid(J_ref)
    rho = solve_sn(problem, grid, gauss_legendre_ordinates(M), t_end, second_order)
    write_profile(path, grid.centers, rho, {
        "problem": problem.name, "M": M, "J": J_ref, "t_end": repr(t_end),
        "second_order": int(second_order),
    })
    return rho
