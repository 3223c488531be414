"""Second-order realizability-preserving finite-volume scheme in slab geometry.

One time step is ``S(dt/2) F(dt) S(dt/2)``: ``S`` is the exact source step
and ``F`` is Heun's method applied to the transport part.  Every Heun stage
runs the same pipeline:

1. solve the entropy problem for every cell mean (regularized means replace
   the stored ones),
2. reconstruct linear slopes with minmod in characteristic variables,
3. limit the interface values back into the realizable set,
4. solve the entropy problem at every interface value; a cell whose
   interface solve needs regularization falls back to first order,
5. assemble kinetic fluxes and the conservative update.

Linear closures skip steps 1, 3 and 4.
"""
from __future__ import annotations

import math
import time
from collections import Counter
from dataclasses import dataclass, field, replace

import numpy as np

from . import realizability as rl
from .basis import FULL_LEGENDRE, HAT, PARTIAL, BasisSpec, NodalBasis, full_basis, hat_basis, make_nodal_basis, partial_basis
from .closure import ENTROPY, LINEAR, ClosureKind, characteristic_batch, half_flux, kinetic_flux, make_closure
from .entropy_solver import NewtonConfig, ansatz_values, dense_hessian, solve_batch
from .problems import DIRICHLET, PERIODIC, PSI_VAC, RHO_MIN, RHO_VAC, Grid1D, ProblemSpec
from .source_solver import advance_moments

MODELS = {
    "pn": ("full", LINEAR),
    "mn": ("full", ENTROPY),
    "hfpn": (HAT, LINEAR),
    "hfmn": (HAT, ENTROPY),
    "pmpn": (PARTIAL, LINEAR),
    "pmmn": (PARTIAL, ENTROPY),
}


class SchemeError(RuntimeError):
    """A fatal step error; carries the offending cell when known."""

    def __init__(self, message, cell=None, snapshot=None):
        super().__init__(message)
        self.cell = cell
        self.snapshot = snapshot


def minmod(a, b, c):
    """Componentwise minmod of three arrays."""
    a, b, c = np.asarray(a), np.asarray(b), np.asarray(c)
    s = np.sign(a)
    same = (s == np.sign(b)) & (s == np.sign(c))
    m = np.minimum(np.minimum(np.abs(a), np.abs(b)), np.abs(c))
    return np.where(same, s * m, 0.0)


def cfl_dt(dz: float, eps_gamma: float = 1e-2, dimension: int = 1, safety: float = 0.99) -> float:
    """dt = safety (1 - eps_gamma) / (2 sqrt(d)) dz."""
    return safety * (1.0 - eps_gamma) / (2.0 * math.sqrt(dimension)) * dz


def default_quad_order(model: str, n: int, problem: str | None = None) -> int:
    if MODELS[model][0] != "full":
        return 15
    if problem == "source-beam":
        return 197
    return 2 * (n - 1) + 40


def make_basis_spec(model: str, n: int) -> BasisSpec:
    family = MODELS[model][0]
    if family == "full":
        if n < 1:
            raise ValueError("full-moment models need n >= 1")
        return full_basis(n - 1)
    if family == HAT:
        return hat_basis(n)
    return partial_basis(n)


@dataclass(frozen=True)
class Model:
    name: str
    nb: NodalBasis
    closure: ClosureKind

    @property
    def spec(self) -> BasisSpec:
        return self.nb.spec

    @property
    def n(self) -> int:
        return self.nb.n

    @property
    def is_entropy(self) -> bool:
        return self.closure.is_entropy


def build_model(name: str, n: int, quad_order: int | None = None, problem: str | None = None) -> Model:
    if name not in MODELS:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODELS)}")
    spec = make_basis_spec(name, n)
    order = default_quad_order(name, n, problem) if quad_order is None else quad_order
    nb = make_nodal_basis(spec, order)
    return Model(name, nb, make_closure(nb, MODELS[name][1]))


@dataclass(frozen=True)
class SchemeConfig:
    newton: NewtonConfig = field(default_factory=NewtonConfig)
    limiter: rl.LimiterConfig = field(default_factory=rl.LimiterConfig)
    cfl_safety: float = 0.99
    dimension: int = 1
    reconstruct: bool = True
    half_space: bool = False  # facet limiter instead of the LP for full bases with n <= 3
    characteristic_limiter: bool = False
    check_realizability: bool = False
    threads: int = 1


@dataclass
class StateField:
    U: np.ndarray  # (J, n) cell means
    alpha: np.ndarray | None = None  # last multipliers (warm start)
    disabled: np.ndarray | None = None  # per-cell reconstruction-disabled flag

    def copy(self) -> "StateField":
        return StateField(self.U.copy(), None if self.alpha is None else self.alpha.copy(),
                          None if self.disabled is None else self.disabled.copy())


@dataclass
class Diagnostics:
    steps: int = 0
    stages: int = 0
    limiter_activations: int = 0
    max_theta: float = 0.0
    mood_activations: int = 0
    rho_min_guard: int = 0
    lp_limiter_calls: int = 0
    lp_realizability_checks: int = 0
    regularization: Counter = field(default_factory=Counter)
    newton_iterations: Counter = field(default_factory=Counter)
    wall_time: float = 0.0

    def record_solve(self, rep) -> None:
        for r, c in zip(*np.unique(rep.r, return_counts=True)):
            self.regularization[float(r)] += int(c)
        for k, c in zip(*np.unique(rep.iterations, return_counts=True)):
            self.newton_iterations[int(k)] += int(c)
        self.lp_realizability_checks += rep.lp_checks

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "steps", "stages", "limiter_activations", "max_theta", "mood_activations",
            "rho_min_guard", "lp_limiter_calls", "lp_realizability_checks", "wall_time")}
        for r, c in sorted(self.regularization.items()):
            out[f"regularization[{r:g}]"] = c
        for k, c in sorted(self.newton_iterations.items()):
            out[f"newton_iterations[{k}]"] = c
        return out


class Scheme:
    def __init__(self, problem: ProblemSpec, model: Model, grid: Grid1D,
                 cfg: SchemeConfig | None = None):
        self.problem = problem
        self.model = model
        self.grid = grid
        self.cfg = cfg or SchemeConfig()
        self.diag = Diagnostics()
        nb = model.nb
        self.sigma_s, self.sigma_a, self.q = problem.material(grid, nb)
        self.has_source = bool(np.any(self.sigma_s) or np.any(self.sigma_a) or np.any(self.q))
        self.periodic = problem.boundary == PERIODIC
        self.iso_vac = nb.u_iso_unit * PSI_VAC
        self._half_space = None
        if (self.cfg.half_space and model.is_entropy and nb.spec.is_full and nb.n <= 3):
            self._half_space = rl.build_half_space_set(nb)
        if not model.is_entropy:
            _, V, Vi, _ = characteristic_batch(model.closure, np.zeros((1, nb.n)))
            self._V_lin, self._Vi_lin = V[0], Vi[0]
        gl, gr = problem.boundary_moments(nb)
        self.ghost_u = np.vstack([gl, gr])
        if model.is_entropy:
            # a beam's moments can sit on the edge of the realizable set where
            # no ansatz exists, so the inflow is taken from psi_b itself
            left, right = problem.boundary_values(nb.mu, nb.w)
            self.inflow = (nb.moments_of(left[None, :], weight=nb.mu * nb.pos)[0],
                           nb.moments_of(right[None, :], weight=nb.mu * nb.neg)[0])
        else:
            self.inflow = (half_flux(model.closure, gl, +1), half_flux(model.closure, gr, -1))

    # -- setup ------------------------------------------------------------

    def initial_field(self) -> StateField:
        U = self.problem.initial_moments(self.model.nb, self.grid)
        return StateField(U, None, np.zeros(self.grid.J, dtype=bool))

    def dt_max(self) -> float:
        return cfl_dt(self.grid.dz, self.cfg.newton.eps_gamma, self.cfg.dimension, self.cfg.cfl_safety)

    # -- step 1: means ----------------------------------------------------

    def prepare(self, f: StateField) -> StateField:
        """Guard tiny densities and solve the entropy problem for the means."""
        if not self.model.is_entropy:
            return StateField(f.U, f.U, np.zeros(len(f.U), dtype=bool))
        U = f.U.copy()
        rho = U @ self.model.spec.e_vector
        low = ~(rho >= RHO_MIN)
        if np.any(low):
            self.diag.rho_min_guard += int(low.sum())
            U[low] = self.iso_vac
        rep = solve_batch(self.model.nb, U, self.cfg.newton, f.alpha, self.cfg.threads)
        self.diag.record_solve(rep)
        reg = rep.r > 0
        U[reg] = rep.moments[reg]
        return StateField(U, rep.alpha, np.zeros(len(U), dtype=bool))

    # -- steps 2-4: interface values ---------------------------------------

    def _extended(self, U: np.ndarray) -> np.ndarray:
        if self.periodic:
            return np.vstack([U[-1:], U, U[:1]])
        return np.vstack([self.ghost_u[:1], U, self.ghost_u[1:]])

    def half_jumps(self, f: StateField) -> np.ndarray:
        """h_j = (dz / 2) u'_j from characteristic minmod; zero where disabled."""
        U = f.U
        J, n = U.shape
        if not self.cfg.reconstruct:
            return np.zeros_like(U)
        E = self._extended(U)
        dp = E[2:] - E[1:-1]
        dm = E[1:-1] - E[:-2]
        dc = 0.5 * (E[2:] - E[:-2])
        if self.model.is_entropy:
            _, V, Vi, ok = characteristic_batch(self.model.closure, f.alpha)
            wp = np.einsum("jab,jb->ja", Vi, dp)
            wm = np.einsum("jab,jb->ja", Vi, dm)
            wc = np.einsum("jab,jb->ja", Vi, dc)
            h = 0.5 * np.einsum("jab,jb->ja", V, minmod(wp, wm, wc))
            h[~ok] = 0.0
        else:
            Vi, V = self._Vi_lin, self._V_lin
            h = 0.5 * minmod(dp @ Vi.T, dm @ Vi.T, dc @ Vi.T) @ V.T
        if f.disabled is not None:
            h[f.disabled] = 0.0
        return h

    def limit(self, U: np.ndarray, h: np.ndarray, alpha: np.ndarray | None) -> np.ndarray:
        """Scale each cell's half jump so both interface values are realizable."""
        if not self.model.is_entropy:
            return h
        active = np.flatnonzero(np.any(h != 0.0, axis=1))
        if active.size == 0:
            return h
        theta = np.zeros(len(U))
        ub = U[active]
        lo, hi = ub - h[active], ub + h[active]
        spec = self.model.spec
        lcfg = self.cfg.limiter
        if self.cfg.characteristic_limiter and spec.kind != PARTIAL:
            return self._limit_characteristic(U, h, alpha, active)
        if spec.kind == HAT:
            th = np.maximum(rl.limit_hat(lo, ub, lcfg), rl.limit_hat(hi, ub, lcfg))
        elif spec.kind == PARTIAL:
            th = np.maximum(rl.limit_partial_1d(lo, ub, spec, lcfg), rl.limit_partial_1d(hi, ub, spec, lcfg))
        elif self._half_space is not None:
            th = np.maximum(rl.limit_half_space(lo, ub, self._half_space, lcfg),
                            rl.limit_half_space(hi, ub, self._half_space, lcfg))
        else:
            th = self._limit_full_lp(lo, hi, ub, alpha[active])
        theta[active] = th
        touched = theta > 0
        self.diag.limiter_activations += int(touched.sum())
        if touched.any():
            self.diag.max_theta = max(self.diag.max_theta, float(theta.max()))
        out = h * (1.0 - theta)[:, None]
        out[theta >= 1.0] = 0.0
        return out

    def _limit_full_lp(self, lo, hi, ub, alpha) -> np.ndarray:
        """LP limiter, skipping the LP where a certificate already shows realizability."""
        nb = self.model.nb
        psi = ansatz_values(nb, alpha)
        H = dense_hessian(nb, psi)
        th = np.zeros(len(ub))
        ok_lo = self._certify(lo, alpha, H)
        ok_hi = self._certify(hi, alpha, H)
        todo = np.flatnonzero(~(ok_lo & ok_hi))
        ok_mean = self._certify(ub[todo], alpha[todo], H[todo])
        for k, i in enumerate(todo):
            if not ok_mean[k] and not rl.is_realizable(nb, ub[i]):
                th[i] = 1.0
                continue
            t = 0.0
            for edge, ok in ((lo[i], ok_lo[i]), (hi[i], ok_hi[i])):
                if ok:
                    continue
                self.diag.lp_limiter_calls += 1
                try:
                    t = max(t, rl.limit_full_lp(edge, ub[i], nb, self.cfg.limiter))
                except rl.LimiterFailure:
                    t = 1.0
            th[i] = t
        return th

    def _certify(self, V, alpha, H) -> np.ndarray:
        nb = self.model.nb
        psi = ansatz_values(nb, alpha)
        delta = V - nb.moments_of(psi)
        y = np.linalg.solve(H, delta[..., None])[..., 0]
        c = 1.0 + y @ nb.B.T
        return np.all(c >= 0.0, axis=1) & np.all(np.isfinite(c), axis=1) & (V @ nb.spec.e_vector > 0)

    def _limit_characteristic(self, U, h, alpha, active) -> np.ndarray:
        """Componentwise limiting of characteristic variables; falls back to
        first order where the combined result is not realizable."""
        nb = self.model.nb
        spec = self.model.spec
        _, V, Vi, ok = characteristic_batch(self.model.closure, alpha[active])
        out = h.copy()
        for k, j in enumerate(active):
            if not ok[k]:
                out[j] = 0.0
                continue
            ub = U[j]
            try:
                if spec.kind == HAT:
                    t_lo = rl.limit_hat_characteristic(ub - h[j], ub, V[k], self.cfg.limiter)
                    t_hi = rl.limit_hat_characteristic(ub + h[j], ub, V[k], self.cfg.limiter)
                else:
                    self.diag.lp_limiter_calls += 2
                    t_lo = rl.limit_full_lp_characteristic(ub - h[j], ub, nb, V[k], self.cfg.limiter)
                    t_hi = rl.limit_full_lp_characteristic(ub + h[j], ub, nb, V[k], self.cfg.limiter)
            except rl.LimiterFailure:
                out[j] = 0.0
                continue
            t = np.maximum(t_lo, t_hi)
            hj = V[k] @ ((1.0 - t) * (Vi[k] @ h[j]))
            good = all(rl.is_realizable(nb, ub + s * hj, self.cfg.limiter.eps_R if spec.kind == HAT else 0.0)
                       for s in (-1.0, 1.0))
            out[j] = hj if good else 0.0
            if np.any(t > 0) or not good:
                self.diag.limiter_activations += 1
        return out

    def interface_states(self, f: StateField) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(u_minus, u_plus, s_minus, s_plus): values at each cell's left and
        right edge plus their closure states."""
        U = f.U
        h = self.limit(U, self.half_jumps(f), f.alpha)
        lo, hi = U - h, U + h
        if not self.model.is_entropy:
            return lo, hi, lo, hi
        s_lo = f.alpha.copy()
        s_hi = f.alpha.copy()
        cells = np.flatnonzero(np.any(h != 0.0, axis=1))
        if cells.size:
            nb = self.model.nb
            batch = np.vstack([lo[cells], hi[cells]])
            warm = np.vstack([f.alpha[cells], f.alpha[cells]])
            rep = solve_batch(nb, batch, self.cfg.newton, warm, self.cfg.threads)
            self.diag.record_solve(rep)
            m = cells.size
            bad = (rep.r[:m] > 0) | (rep.r[m:] > 0)
            good = cells[~bad]
            s_lo[good] = rep.alpha[:m][~bad]
            s_hi[good] = rep.alpha[m:][~bad]
            mood = cells[bad]
            if mood.size:
                # MOOD: first order in these cells
                self.diag.mood_activations += int(mood.size)
                lo[mood] = U[mood]
                hi[mood] = U[mood]
        return lo, hi, s_lo, s_hi

    def face_fluxes(self, f: StateField) -> np.ndarray:
        """Kinetic fluxes through all J + 1 faces."""
        lo, hi, s_lo, s_hi = self.interface_states(f)
        c = self.model.closure
        if self.periodic:
            return kinetic_flux(c, np.vstack([s_hi[-1:], s_hi]), np.vstack([s_lo, s_lo[:1]]))
        F = np.empty((self.grid.J + 1, self.model.n))
        F[1:-1] = kinetic_flux(c, s_hi[:-1], s_lo[1:])
        F[0] = self.inflow[0] + half_flux(c, s_lo[0], -1)
        F[-1] = half_flux(c, s_hi[-1], +1) + self.inflow[1]
        return F

    def rhs(self, f: StateField) -> np.ndarray:
        """(F_{j-1/2} - F_{j+1/2}) / dz for a prepared field."""
        F = self.face_fluxes(f)
        return (F[:-1] - F[1:]) / self.grid.dz

    # -- time stepping ----------------------------------------------------

    def euler_flux_step(self, f: StateField, dt: float) -> StateField:
        p = self.prepare(f)
        return StateField(p.U + dt * self.rhs(p), p.alpha, None)

    def _check(self, U: np.ndarray, where: str) -> None:
        if not self.cfg.check_realizability:
            return
        ok = rl.is_realizable_batch(self.model.nb, U)
        if not np.all(ok):
            j = int(np.flatnonzero(~ok)[0])
            raise SchemeError(f"non-realizable cell mean after {where}", cell=j, snapshot=U.copy())

    def heun_step(self, f: StateField, dt: float) -> StateField:
        p0 = self.prepare(f)
        self.diag.stages += 1
        U1 = p0.U + dt * self.rhs(p0)
        self._check(U1, "first Heun stage")
        p1 = self.prepare(StateField(U1, p0.alpha))
        self.diag.stages += 1
        U2 = p1.U + dt * self.rhs(p1)
        self._check(U2, "second Heun stage")
        Unew = 0.5 * p0.U + 0.5 * U2
        if not np.all(np.isfinite(Unew)):
            j = int(np.flatnonzero(~np.all(np.isfinite(Unew), axis=1))[0])
            raise SchemeError("non-finite cell mean", cell=j, snapshot=Unew)
        return StateField(Unew, p1.alpha)

    def source_step(self, f: StateField, dt: float) -> StateField:
        if not self.has_source or dt == 0.0:
            return f
        nb = self.model.nb
        U = advance_moments(nb.spec.e_vector, nb.u_iso_unit, self.sigma_s, self.sigma_a, self.q, f.U, dt)
        return StateField(U, f.alpha, f.disabled)

    def strang_step(self, f: StateField, dt: float) -> StateField:
        f = self.source_step(f, 0.5 * dt)
        self._check(f.U, "source half step")
        f = self.heun_step(f, dt)
        f = self.source_step(f, 0.5 * dt)
        self._check(f.U, "source half step")
        self.diag.steps += 1
        return f

    def run(self, t_end: float | None = None, f: StateField | None = None,
            callback=None) -> StateField:
        """March to ``t_end``; the last step is shortened to land on it exactly."""
        t_end = self.problem.t_end if t_end is None else float(t_end)
        if t_end < 0:
            raise ValueError("t_end must be nonnegative")
        f = self.initial_field() if f is None else f
        dt_max = self.dt_max()
        t = 0.0
        start = time.perf_counter()
        while t < t_end:
            dt = min(dt_max, t_end - t)
            if t_end - (t + dt) < 1e-12 * max(1.0, t_end):
                dt = t_end - t
            f = self.strang_step(f, dt)
            t = t_end if dt == t_end - t else t + dt
            if callback is not None:
                callback(t, f)
        self.diag.wall_time += time.perf_counter() - start
        return f

    def density(self, f: StateField) -> np.ndarray:
        return f.U @ self.model.spec.e_vector


def simulate(problem: ProblemSpec, model: str, n: int, J: int, *, quad_order: int | None = None,
             t_end: float | None = None, cfg: SchemeConfig | None = None):
    """Convenience front end: returns (scheme, final field)."""
    m = build_model(model, n, quad_order, problem.name)
    scheme = Scheme(problem, m, problem.grid(J), cfg)
    return scheme, scheme.run(t_end)
