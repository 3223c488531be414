"""Dual Newton solver for the Maxwell-Boltzmann minimum-entropy problem.

For moments ``u`` we minimise ``<exp(b^T alpha)> - alpha^T u`` over the
multipliers.  Problems are solved in batches: every array carries a leading
batch axis and each problem follows its own trajectory (converged problems
are frozen), so results do not depend on how problems are grouped.

Hat and partial bases never form dense Hessians here: the hat Hessian is
tridiagonal and the partial one is block diagonal with 2x2 blocks.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import lp
from .basis import HAT, PARTIAL, NodalBasis, _scatter_add

EXP_CAP = 700.0
CHUNK = 512


class OptimizationFailure(RuntimeError):
    def __init__(self, message, alpha=None):
        super().__init__(message)
        self.alpha = alpha


@dataclass(frozen=True)
class NewtonConfig:
    k0: int = 500
    k_max: int = 1000
    eps_gamma: float = 1e-2
    chol_eps: float = 2.0 ** -52
    chi: float = 0.5
    xi: float = 1e-3
    tau: float = 1e-9
    reg_ladder: tuple = (0.0, 1e-8, 1e-6, 1e-4, 1e-3, 1e-2, 0.05, 0.1, 0.5, 1.0)
    max_backtracks: int = 60

    def __post_init__(self):
        ladder = np.asarray(self.reg_ladder, dtype=float)
        if ladder[0] != 0.0 or ladder[-1] != 1.0 or np.any(np.diff(ladder) <= 0):
            raise ValueError("regularization ladder must increase strictly from 0 to 1")
        if not 0.0 < self.eps_gamma < 1.0:
            raise ValueError("eps_gamma must lie in (0, 1)")


@dataclass
class SolveReport:
    alpha: np.ndarray
    iterations: int
    regularization_r: float
    converged: bool
    moments: np.ndarray  # the (possibly regularized) moments actually matched


@dataclass
class BatchReport:
    alpha: np.ndarray
    iterations: np.ndarray
    r: np.ndarray
    converged: np.ndarray
    moments: np.ndarray
    lp_checks: int = 0

    def __len__(self):
        return len(self.alpha)


# -- quadrature-based integrals --------------------------------------------

def _exponent(nb: NodalBasis, alpha: np.ndarray) -> np.ndarray:
    return nb.exponent(np.atleast_2d(alpha))


def ansatz_values(nb: NodalBasis, alpha) -> np.ndarray:
    """exp(b^T alpha) at every node, shape (m, Q)."""
    with np.errstate(over="raise"):
        try:
            return np.exp(_exponent(nb, np.asarray(alpha, dtype=float)))
        except FloatingPointError as exc:
            raise FloatingPointError("exp overflow in ansatz evaluation") from exc


def ansatz_moments(nb: NodalBasis, alpha) -> np.ndarray:
    """u(alpha) = <b exp(b^T alpha)>; keeps the input's batch shape."""
    alpha = np.asarray(alpha, dtype=float)
    out = nb.moments_of(ansatz_values(nb, alpha))
    return out[0] if alpha.ndim == 1 else out


def ansatz_density(nb: NodalBasis, alpha) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    out = ansatz_values(nb, alpha) @ nb.w
    return out[0] if alpha.ndim == 1 else out


def dense_hessian(nb: NodalBasis, psi: np.ndarray, weight: np.ndarray | None = None) -> np.ndarray:
    """<b b^T psi> (times an optional nodal weight), dense (m, n, n)."""
    ww = nb.w if weight is None else nb.w * weight
    wp = psi * ww
    return np.einsum("mq,qi,qj->mij", wp, nb.B, nb.B, optimize=True)


def gradient_and_hessian(nb: NodalBasis, alpha, u_target):
    """Gradient <b e^{b.alpha}> - u and dense Hessian <b b^T e^{b.alpha}>."""
    alpha = np.asarray(alpha, dtype=float)
    psi = ansatz_values(nb, alpha)
    g = nb.moments_of(psi) - np.atleast_2d(u_target)
    H = dense_hessian(nb, psi)
    if alpha.ndim == 1:
        return g[0], H[0]
    return g, H


def dual_objective(nb: NodalBasis, alpha, u) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    out = ansatz_values(nb, alpha) @ nb.w - np.sum(np.atleast_2d(alpha) * np.atleast_2d(u), axis=1)
    return out[0] if alpha.ndim == 1 else out


# -- structured Hessian factorizations -------------------------------------

class _Factor:
    """Cholesky factor of a batch of Hessians with a success mask."""

    ok: np.ndarray

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class _DenseFactor(_Factor):
    def __init__(self, H: np.ndarray, eps: float):
        m, n, _ = H.shape
        L = np.zeros_like(H)
        ok = np.ones(m, dtype=bool)
        try:
            L[:] = np.linalg.cholesky(H)
        except np.linalg.LinAlgError:
            for i in range(m):
                try:
                    L[i] = np.linalg.cholesky(H[i])
                except np.linalg.LinAlgError:
                    ok[i] = False
                    L[i] = np.eye(n)
        diag = np.diagonal(L, axis1=1, axis2=2)
        hmax = np.max(np.abs(np.diagonal(H, axis1=1, axis2=2)), axis=1)
        ok &= np.all(np.isfinite(diag), axis=1)
        ok &= np.all(diag ** 2 > eps * hmax[:, None], axis=1)
        L[~ok] = np.eye(n)
        self.L = L
        self.ok = ok

    def solve(self, rhs):
        y = np.linalg.solve(self.L, rhs[..., None])
        return np.linalg.solve(np.swapaxes(self.L, 1, 2), y)[..., 0]


class _TridiagFactor(_Factor):
    def __init__(self, diag: np.ndarray, off: np.ndarray, eps: float):
        m, n = diag.shape
        l = np.empty_like(diag)
        c = np.zeros_like(off)
        ok = np.ones(m, dtype=bool)
        floor = eps * np.max(np.abs(diag), axis=1)
        piv = diag[:, 0].copy()
        for i in range(n):
            if i > 0:
                piv = diag[:, i] - c[:, i - 1] ** 2
            bad = ~(piv > floor)
            ok &= ~bad
            piv = np.where(bad, 1.0, piv)
            l[:, i] = np.sqrt(piv)
            if i < n - 1:
                c[:, i] = off[:, i] / l[:, i]
        self.l, self.c, self.ok = l, c, ok

    def solve(self, rhs):
        l, c = self.l, self.c
        n = rhs.shape[1]
        y = np.empty_like(rhs)
        y[:, 0] = rhs[:, 0] / l[:, 0]
        for i in range(1, n):
            y[:, i] = (rhs[:, i] - c[:, i - 1] * y[:, i - 1]) / l[:, i]
        x = np.empty_like(rhs)
        x[:, -1] = y[:, -1] / l[:, -1]
        for i in range(n - 2, -1, -1):
            x[:, i] = (y[:, i] - c[:, i] * x[:, i + 1]) / l[:, i]
        return x


class _Block2Factor(_Factor):
    def __init__(self, a: np.ndarray, b: np.ndarray, d: np.ndarray, eps: float):
        # blocks [[a, b], [b, d]] with shape (m, k)
        floor = eps * np.maximum(np.abs(a), np.abs(d))
        ok_a = a > floor
        l11 = np.sqrt(np.where(ok_a, a, 1.0))
        l21 = b / l11
        piv = d - l21 ** 2
        ok_d = piv > floor
        l22 = np.sqrt(np.where(ok_d, piv, 1.0))
        self.ok = np.all(ok_a & ok_d, axis=1)
        self.l11, self.l21, self.l22 = l11, l21, l22

    def solve(self, rhs):
        r0, r1 = rhs[:, 0::2], rhs[:, 1::2]
        y0 = r0 / self.l11
        y1 = (r1 - self.l21 * y0) / self.l22
        x1 = y1 / self.l22
        x0 = (y0 - self.l21 * x1) / self.l11
        out = np.empty_like(rhs)
        out[:, 0::2] = x0
        out[:, 1::2] = x1
        return out


def _local_hessian_parts(nb: NodalBasis, psi: np.ndarray, weight=None):
    """Diagonal and first off-diagonal of <b b^T psi> for hat/partial bases."""
    ww = nb.w if weight is None else nb.w * weight
    wp = psi * ww
    v0, v1 = nb.local_vals[:, 0], nb.local_vals[:, 1]
    i0, i1 = nb.local_idx[:, 0], nb.local_idx[:, 1]
    m, n = psi.shape[0], nb.n
    diag = np.zeros((m, n))
    off = np.zeros((m, n - 1)) if n > 1 else np.zeros((m, 0))
    _scatter_add(diag, i0, wp * v0 * v0)
    _scatter_add(diag, i1, wp * v1 * v1)
    _scatter_add(off, i0, wp * v0 * v1)
    return diag, off


def structured_hessian(nb: NodalBasis, psi: np.ndarray, weight=None):
    """Hessian in the cheapest exact representation for the basis."""
    if nb.local_idx is None:
        return ("dense", dense_hessian(nb, psi, weight))
    diag, off = _local_hessian_parts(nb, psi, weight)
    return ("tridiag", diag, off)


def tridiag_to_dense(diag: np.ndarray, off: np.ndarray) -> np.ndarray:
    m, n = diag.shape
    H = np.zeros((m, n, n))
    r = np.arange(n)
    H[:, r, r] = diag
    if n > 1:
        H[:, r[:-1], r[1:]] = off
        H[:, r[1:], r[:-1]] = off
    return H


def _factor(nb: NodalBasis, psi: np.ndarray, eps: float) -> _Factor:
    H = structured_hessian(nb, psi)
    if H[0] == "dense":
        return _DenseFactor(H[1], eps)
    diag, off = H[1], H[2]
    if nb.spec.kind == PARTIAL:
        return _Block2Factor(diag[:, 0::2], off[:, 0::2], diag[:, 1::2], eps)
    return _TridiagFactor(diag, off, eps)


# -- realizability of the stopping criterion --------------------------------

def _criterion_b(nb: NodalBasis, phi, ubeta, rho_beta, d, psi, eps_gamma) -> tuple[np.ndarray, int]:
    """Is phi - (1 - eps_gamma) u(beta) / varrho(beta) realizable?"""
    v = phi - (1.0 - eps_gamma) * ubeta / rho_beta[:, None]
    kind = nb.spec.kind
    if kind == HAT:
        return np.all(v > 0.0, axis=1), 0
    if kind == PARTIAL:
        grid = nb.spec.grid
        v0, v1 = v[:, 0::2], v[:, 1::2]
        ok = (v0 > 0) & (v1 > grid[:-1] * v0) & (v1 < grid[1:] * v0)
        return np.all(ok, axis=1), 0
    # full moments: v = sum_i w_i psi_i c_i b_i with c_i = 1 - (1-eps)/varrho + b_i^T d
    # (d is the Newton direction); c >= 0 certifies realizability exactly.
    c = 1.0 - (1.0 - eps_gamma) / rho_beta[:, None] + d @ nb.B.T
    ok = np.all(c >= 0.0, axis=1)
    lp_checks = 0
    for i in np.flatnonzero(~ok):
        lp_checks += 1
        ok[i] = lp.feasible_nonnegative(nb.B.T, v[i])
    return ok, lp_checks


# -- the solver -------------------------------------------------------------

def _tau_prime(nb: NodalBasis, phi_norm, rho, tau):
    if nb.spec.is_full:
        return tau / ((1.0 + phi_norm) * rho + tau)
    sn = math.sqrt(nb.n)
    return tau / ((1.0 + sn * phi_norm) * rho + sn * tau)


def _solve_chunk(nb: NodalBasis, U: np.ndarray, cfg: NewtonConfig, alpha0) -> BatchReport:
    m, n = U.shape
    e = nb.spec.e_vector
    iso = nb.u_iso_unit / 2.0
    beta_iso = math.log(0.5) * e
    ladder = np.asarray(cfg.reg_ladder, dtype=float)
    last_rung = len(ladder) - 1

    rho = U @ e
    if np.any(~(rho > 0)):
        raise OptimizationFailure("solve needs positive density")
    phi0 = U / rho[:, None]

    if alpha0 is None:
        beta = np.tile(beta_iso, (m, 1))
    else:
        beta = np.array(alpha0, dtype=float) - np.log(rho)[:, None] * e
        bad = ~np.all(np.isfinite(beta), axis=1)
        beta[bad] = beta_iso

    rung = np.zeros(m, dtype=int)
    k_in_rung = np.zeros(m, dtype=int)
    iters = np.zeros(m, dtype=int)
    done = np.zeros(m, dtype=bool)
    phi = phi0.copy()
    lp_checks = 0

    def advance(idx):
        rung[idx] += 1
        k_in_rung[idx] = 0
        r = ladder[rung[idx]]
        phi[idx] = (1.0 - r)[:, None] * phi0[idx] + r[:, None] * iso
        bad = ~np.all(np.isfinite(beta[idx]) & (np.abs(beta[idx]) < EXP_CAP), axis=1)
        beta[idx[bad]] = beta_iso
        iso_now = idx[rung[idx] == last_rung]
        beta[iso_now] = beta_iso
        done[iso_now] = True

    while True:
        act = np.flatnonzero(~done)
        if act.size == 0:
            break
        b = beta[act]
        ph = phi[act]
        ex = nb.exponent(b)
        ovf = np.max(ex, axis=1) > EXP_CAP
        ex = np.minimum(ex, EXP_CAP)
        psi = np.exp(ex)
        ub = nb.moments_of(psi)
        g = ub - ph
        fac = _factor(nb, psi, cfg.chol_eps)
        failed = ~fac.ok | ovf
        iters[act] += 1
        k_in_rung[act] += 1

        d = -fac.solve(g)
        failed |= ~np.all(np.isfinite(d), axis=1)
        rho_b = psi @ nb.w
        gnorm = np.linalg.norm(g, axis=1)
        tau_p = _tau_prime(nb, np.linalg.norm(ph, axis=1), rho[act], cfg.tau)
        conv = (~failed) & (gnorm < np.minimum(tau_p, cfg.tau))
        if nb.spec.kind != HAT:
            gate = 1.0 - cfg.eps_gamma < np.exp(-(np.abs(d).sum(axis=1) + np.abs(np.log(rho_b))))
            conv &= gate
        if np.any(conv):
            ci = np.flatnonzero(conv)
            okb, nlp = _criterion_b(nb, ph[ci], ub[ci], rho_b[ci], d[ci], psi[ci], cfg.eps_gamma)
            lp_checks += nlp
            conv[ci] = okb
        done[act[conv]] = True

        # Armijo backtracking on the rest
        ls = np.flatnonzero(~conv & ~failed)
        if ls.size:
            bl, dl, gl, phl = b[ls], d[ls], g[ls], ph[ls]
            f0 = rho_b[ls] - np.sum(bl * phl, axis=1)
            # f cancels terms of size |beta_i phi_i|; near the optimum the
            # predicted decrease falls below that round-off level
            f_scale = rho_b[ls] + np.sum(np.abs(bl * phl), axis=1)
            slope = np.sum(gl * dl, axis=1)
            zeta = np.ones(ls.size)
            accepted = np.zeros(ls.size, dtype=bool)
            for _ in range(cfg.max_backtracks):
                todo = np.flatnonzero(~accepted)
                if todo.size == 0:
                    break
                trial = bl[todo] + zeta[todo, None] * dl[todo]
                ex_t = nb.exponent(trial)
                capped = np.max(ex_t, axis=1) > EXP_CAP
                f_t = np.exp(np.minimum(ex_t, EXP_CAP)) @ nb.w - np.sum(trial * phl[todo], axis=1)
                slack = 16.0 * np.finfo(float).eps * f_scale[todo]
                ok_t = ~capped & (f_t <= f0[todo] + cfg.xi * zeta[todo] * slope[todo] + slack)
                accepted[todo[ok_t]] = True
                zeta[todo[~ok_t]] *= cfg.chi
            beta[act[ls[accepted]]] = bl[accepted] + zeta[accepted, None] * dl[accepted]
            failed[ls[~accepted]] = True

        exhausted = (~done[act]) & (k_in_rung[act] >= cfg.k0)
        to_advance = act[(failed & ~conv) | exhausted]
        if to_advance.size:
            advance(to_advance)
        # global cap: fall through to the isotropic rung, which is exact
        over = act[(~done[act]) & (iters[act] >= cfg.k_max)]
        if over.size:
            rung[over] = last_rung - 1
            advance(over)

    r = ladder[rung]
    rho_beta = nb.exponent(beta)
    rho_beta = np.exp(np.minimum(rho_beta, EXP_CAP)) @ nb.w
    alpha = beta + np.log(rho / rho_beta)[:, None] * e
    moments = ((1.0 - r)[:, None] * phi0 + r[:, None] * iso) * rho[:, None]
    return BatchReport(alpha, iters, r, np.ones(m, dtype=bool), moments, lp_checks)


def solve_batch(nb: NodalBasis, U, cfg: NewtonConfig | None = None, alpha0=None,
                threads: int = 1) -> BatchReport:
    """Solve many independent problems; chunking is fixed so results do not
    depend on ``threads``."""
    cfg = cfg or NewtonConfig()
    U = np.atleast_2d(np.asarray(U, dtype=float))
    m = U.shape[0]
    if m == 0:
        z = np.zeros((0, nb.n))
        return BatchReport(z, np.zeros(0, int), np.zeros(0), np.zeros(0, bool), z)
    starts = list(range(0, m, CHUNK))

    def work(s):
        a0 = None if alpha0 is None else np.asarray(alpha0)[s:s + CHUNK]
        return _solve_chunk(nb, U[s:s + CHUNK], cfg, a0)

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, starts))
    else:
        parts = [work(s) for s in starts]
    if len(parts) == 1:
        return parts[0]
    return BatchReport(
        np.concatenate([p.alpha for p in parts]),
        np.concatenate([p.iterations for p in parts]),
        np.concatenate([p.r for p in parts]),
        np.concatenate([p.converged for p in parts]),
        np.concatenate([p.moments for p in parts]),
        sum(p.lp_checks for p in parts),
    )


def solve(nb: NodalBasis, u, cfg: NewtonConfig | None = None, alpha0=None) -> SolveReport:
    """Single-problem front end of :func:`solve_batch`."""
    u = np.asarray(u, dtype=float)
    if not float(u @ nb.spec.e_vector) > 0:
        raise OptimizationFailure("solve needs positive density")
    rep = solve_batch(nb, u[None, :], cfg, None if alpha0 is None else np.asarray(alpha0)[None, :])
    return SolveReport(rep.alpha[0], int(rep.iterations[0]), float(rep.r[0]),
                       bool(rep.converged[0]), rep.moments[0])
