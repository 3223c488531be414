"""Realizability tests and realizability limiters.

Every limiter returns the damping ``theta`` in [0, 1] used to pull a
reconstructed moment vector toward its cell mean,
``u_lim = theta * u_mean + (1 - theta) * u_recon``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lp
from .basis import FULL_MONOMIAL, HAT, PARTIAL, BasisSpec, NodalBasis

ULP_PAD = 16.0 * np.finfo(float).eps


class LimiterFailure(RuntimeError):
    pass


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class LimiterConfig:
    eps_R: float = 1e-11
    eps_tilde: float = 1e-11

    def __post_init__(self):
        if self.eps_R < 0 or self.eps_tilde < 0:
            raise ValueError("limiter epsilons must be nonnegative")


@dataclass(frozen=True)
class HalfSpaceSet:
    normals: np.ndarray  # (d, n)
    offsets: np.ndarray  # (d,)

    @property
    def num_facets(self) -> int:
        return len(self.offsets)


def _ratio(num, den):
    """num/den where it lies in [0, 1], else 0 (also for den == 0)."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = num / den
    t = np.where(np.isfinite(t) & (t >= 0.0) & (t <= 1.0), t, 0.0)
    # a few ulps past the crossing so the rounded limited state keeps the margin
    return np.where(t > 0.0, np.minimum(t + ULP_PAD, 1.0), t)


# -- membership ---------------------------------------------------------------

def partial_conditions(spec: BasisSpec, u, margin: float = 0.0) -> np.ndarray:
    """Per-interval slab conditions with distance ``margin``; shape (..., k)."""
    u = np.asarray(u, dtype=float)
    g = spec.grid
    u0, u1 = u[..., 0::2], u[..., 1::2]
    lo = g[:-1] * u0 + margin * np.sqrt(g[:-1] ** 2 + 1.0)
    hi = g[1:] * u0 - margin * np.sqrt(g[1:] ** 2 + 1.0)
    if margin == 0.0:
        return (u0 > 0) & (lo < u1) & (u1 < hi)
    return (u0 >= margin) & (lo <= u1) & (u1 <= hi)


def is_realizable(nb: NodalBasis, u, margin: float = 0.0) -> bool:
    """Membership in the numerically realizable set.

    Hat: components >= margin (strictly positive for margin 0).  Partial:
    slab conditions at distance ``margin``.  Full moments: LP feasibility of
    ``B w = u, w >= 0`` over the quadrature nodes (``margin`` is not used).
    """
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        return False
    kind = nb.spec.kind
    if kind == HAT:
        return bool(np.all(u > 0.0)) if margin == 0.0 else bool(np.all(u >= margin))
    if kind == PARTIAL:
        return bool(np.all(partial_conditions(nb.spec, u, margin)))
    if float(u @ nb.spec.e_vector) <= 0.0:
        return False
    return lp.feasible_nonnegative(nb.B.T, u)


def is_realizable_batch(nb: NodalBasis, U, margin: float = 0.0) -> np.ndarray:
    U = np.atleast_2d(np.asarray(U, dtype=float))
    kind = nb.spec.kind
    if kind == HAT:
        return np.all(U > 0.0, axis=1) if margin == 0.0 else np.all(U >= margin, axis=1)
    if kind == PARTIAL:
        return np.all(partial_conditions(nb.spec, U, margin), axis=1)
    return np.array([is_realizable(nb, u) for u in U], dtype=bool)


def certify_full(nb: NodalBasis, U, alpha, H=None) -> np.ndarray:
    """Cheap exact certificate that U is numerically realizable.

    With psi = exp(b^T alpha) and H = <b b^T psi>, the vector
    ``u(alpha) + delta`` equals sum_i w_i psi_i (1 + b_i^T H^-1 delta) b_i, so
    nonnegative coefficients prove realizability.  A False answer is
    inconclusive.
    """
    from .entropy_solver import ansatz_values, dense_hessian

    psi = ansatz_values(nb, alpha)
    if H is None:
        H = dense_hessian(nb, psi)
    delta = np.atleast_2d(U) - nb.moments_of(psi)
    try:
        y = np.linalg.solve(H, delta[..., None])[..., 0]
    except np.linalg.LinAlgError:
        return np.zeros(len(delta), dtype=bool)
    c = 1.0 + y @ nb.B.T
    return np.all(c >= 0.0, axis=1) & np.all(np.isfinite(c), axis=1)


# -- hat functions --------------------------------------------------------------

def limit_hat(u_recon, u_mean, cfg: LimiterConfig | float = LimiterConfig()) -> float | np.ndarray:
    """Componentwise positivity limiter; batched over leading axes."""
    eps = cfg.eps_R if isinstance(cfg, LimiterConfig) else float(cfg)
    u = np.asarray(u_recon, dtype=float)
    ub = np.asarray(u_mean, dtype=float)
    th = _ratio(eps - u, ub - u)
    th = np.where(ub < eps, 1.0, th)
    out = th.max(axis=-1)
    return float(out) if out.ndim == 0 else out


# -- partial moments ------------------------------------------------------------

def limit_partial_blocks(u_recon, u_mean, spec: BasisSpec,
                         cfg: LimiterConfig | float = LimiterConfig()) -> np.ndarray:
    """One theta per angular interval, shape (..., k)."""
    eps = cfg.eps_R if isinstance(cfg, LimiterConfig) else float(cfg)
    u = np.asarray(u_recon, dtype=float)
    ub = np.asarray(u_mean, dtype=float)
    g = spec.grid
    lo, hi = g[:-1], g[1:]
    s_lo, s_hi = np.sqrt(lo ** 2 + 1.0), np.sqrt(hi ** 2 + 1.0)
    u0, u1 = u[..., 0::2], u[..., 1::2]
    d0, d1 = ub[..., 0::2] - u0, ub[..., 1::2] - u1
    th0 = _ratio(eps - u0, d0)
    th1 = _ratio(u0 * lo - u1 + eps * s_lo, d1 - d0 * lo)
    th2 = _ratio(u0 * hi - u1 - eps * s_hi, d1 - d0 * hi)
    th = np.maximum(np.maximum(th0, th1), th2)
    mean_ok = partial_conditions(spec, ub, eps) if eps > 0 else partial_conditions(spec, ub, 0.0)
    return np.where(mean_ok, th, 1.0)


def limit_partial_1d(u_recon, u_mean, spec: BasisSpec,
                     cfg: LimiterConfig | float = LimiterConfig()) -> float | np.ndarray:
    out = limit_partial_blocks(u_recon, u_mean, spec, cfg).max(axis=-1)
    return float(out) if out.ndim == 0 else out


# -- full moments: LP and half-space limiters -----------------------------------

def limit_full_lp(u_recon, u_mean, nb: NodalBasis,
                  cfg: LimiterConfig | float = LimiterConfig()) -> float:
    """Smallest theta >= -eps_tilde keeping the line point in the nodal cone.

    Solved as an LP in (w, theta') with theta' = theta + eps_tilde >= 0;
    the returned value is theta' clamped to [0, 1].
    """
    eps = cfg.eps_tilde if isinstance(cfg, LimiterConfig) else float(cfg)
    u = np.asarray(u_recon, dtype=float)
    ub = np.asarray(u_mean, dtype=float)
    if np.array_equal(u, ub):
        return min(max(eps, 0.0), 1.0)
    scale = max(float(np.max(np.abs(ub))), float(np.max(np.abs(u))))
    diff = (ub - u) / scale
    Q = nb.B.shape[0]
    A = np.hstack([nb.B.T, -diff[:, None]])
    rhs = u / scale - eps * diff
    c = np.zeros(Q + 1)
    c[-1] = 1.0
    try:
        res = lp.simplex(c, A, rhs, max_iter=10 * nb.n * Q + 100)
    except lp.LPIterationLimit as exc:
        raise LimiterFailure(str(exc)) from exc
    if res.status != "optimal":
        raise LimiterFailure(f"LP limiter returned {res.status}")
    return float(min(max(res.x[-1], 0.0), 1.0))


def build_half_space_set(nb: NodalBasis, max_n: int = 3) -> HalfSpaceSet:
    """Facets of conv{0, b(mu_i)} with the rho < 1 cap removed (b_0 == 1)."""
    from scipy.spatial import ConvexHull, QhullError

    spec = nb.spec
    if not spec.is_full:
        raise ConfigurationError("half-space limiter is for full-moment bases")
    if spec.n > max_n:
        raise ConfigurationError(f"half-space limiter limited to n <= {max_n}")
    pts = np.vstack([np.zeros(spec.n), np.unique(nb.B, axis=0)])
    if spec.n == 1:
        return HalfSpaceSet(np.array([[-1.0]]), np.array([0.0]))
    try:
        hull = ConvexHull(pts)
    except QhullError as exc:
        raise ConfigurationError(f"degenerate hull: {exc}") from exc
    normals = hull.equations[:, :-1]
    offsets = -hull.equations[:, -1]
    e0 = np.zeros(spec.n)
    e0[0] = 1.0
    cap = np.all(np.abs(normals - e0) < 1e-9, axis=1) & (np.abs(offsets - 1.0) < 1e-9)
    normals, offsets = normals[~cap], offsets[~cap]
    # merge coplanar duplicates
    key = np.round(np.hstack([normals, offsets[:, None]]), 10)
    _, first = np.unique(key, axis=0, return_index=True)
    first = np.sort(first)
    return HalfSpaceSet(normals[first], offsets[first])


def half_space_contains(hs: HalfSpaceSet, u, margin: float = 0.0) -> np.ndarray:
    u = np.atleast_2d(np.asarray(u, dtype=float))
    c = hs.offsets - margin * np.linalg.norm(hs.normals, axis=1)
    return np.all(u @ hs.normals.T < c, axis=1)


def limit_half_space(u_recon, u_mean, hs: HalfSpaceSet,
                     cfg: LimiterConfig | float = LimiterConfig()) -> float | np.ndarray:
    eps = cfg.eps_R if isinstance(cfg, LimiterConfig) else float(cfg)
    u = np.asarray(u_recon, dtype=float)
    ub = np.asarray(u_mean, dtype=float)
    c = hs.offsets - eps * np.linalg.norm(hs.normals, axis=1)
    au = u @ hs.normals.T
    th = _ratio(c - au, (ub - u) @ hs.normals.T).max(axis=-1)
    mean_bad = np.any(ub @ hs.normals.T >= c, axis=-1)
    out = np.where(mean_bad, 1.0, th)
    return float(out) if out.ndim == 0 else out


# -- characteristic componentwise LP limiters (optional) ----------------------

def limit_full_lp_characteristic(u_recon, u_mean, nb: NodalBasis, V: np.ndarray,
                                 cfg: LimiterConfig | float = LimiterConfig()) -> np.ndarray:
    """One theta per characteristic component: min sum(theta) with
    B w + Vt theta = u, w >= 0, 0 <= theta <= 1, Vt_ij = V_ij (w_j - wbar_j)."""
    eps = cfg.eps_tilde if isinstance(cfg, LimiterConfig) else float(cfg)
    u = np.asarray(u_recon, dtype=float)
    ub = np.asarray(u_mean, dtype=float)
    n = nb.n
    Vinv = np.linalg.inv(V)
    wc, wcm = Vinv @ u, Vinv @ ub
    Vt = V * (wc - wcm)[None, :]
    scale = max(float(np.max(np.abs(ub))), float(np.max(np.abs(u))))
    Q = nb.B.shape[0]
    # columns: w (Q), theta (n), slack (n); rows: moments (n), theta + s = 1 (n)
    A = np.zeros((2 * n, Q + 2 * n))
    A[:n, :Q] = nb.B.T
    A[:n, Q:Q + n] = Vt / scale
    A[n:, Q:Q + n] = np.eye(n)
    A[n:, Q + n:] = np.eye(n)
    rhs = np.concatenate([u / scale, np.ones(n)])
    c = np.zeros(Q + 2 * n)
    c[Q:Q + n] = 1.0
    try:
        res = lp.simplex(c, A, rhs, max_iter=10 * n * Q + 100)
    except lp.LPIterationLimit as exc:
        raise LimiterFailure(str(exc)) from exc
    if res.status != "optimal":
        raise LimiterFailure(f"characteristic LP limiter returned {res.status}")
    th = res.x[Q:Q + n]
    return np.clip(np.where(th > 0, th + eps, th), 0.0, 1.0)


def limit_hat_characteristic(u_recon, u_mean, V: np.ndarray,
                             cfg: LimiterConfig | float = LimiterConfig()) -> np.ndarray:
    """min sum(theta) s.t. Vt theta <= u - eps_R, 0 <= theta <= 1."""
    eps = cfg.eps_R if isinstance(cfg, LimiterConfig) else float(cfg)
    u = np.asarray(u_recon, dtype=float)
    ub = np.asarray(u_mean, dtype=float)
    n = len(u)
    if np.any(ub < eps):
        return np.ones(n)
    Vinv = np.linalg.inv(V)
    Vt = V * (Vinv @ u - Vinv @ ub)[None, :]
    # theta (n), slack s (n) for Vt theta + s = u - eps, slack t (n) for theta + t = 1
    A = np.zeros((2 * n, 3 * n))
    A[:n, :n] = Vt
    A[:n, n:2 * n] = np.eye(n)
    A[n:, :n] = np.eye(n)
    A[n:, 2 * n:] = np.eye(n)
    rhs = np.concatenate([u - eps, np.ones(n)])
    c = np.zeros(3 * n)
    c[:n] = 1.0
    res = lp.simplex(c, A, rhs)
    if res.status != "optimal":
        raise LimiterFailure(f"characteristic positivity LP returned {res.status}")
    return np.clip(res.x[:n], 0.0, 1.0)


def project_limited(u_recon, u_mean, theta):
    """theta * u_mean + (1 - theta) * u_recon, leaving theta == 0 rows untouched."""
    u = np.asarray(u_recon, dtype=float)
    ub = np.asarray(u_mean, dtype=float)
    theta = np.asarray(theta, dtype=float)
    out = ub + (1.0 - theta)[..., None] * (u - ub) if theta.ndim else ub + (1.0 - theta) * (u - ub)
    return np.where(np.expand_dims(theta, -1) == 0.0, u, out) if theta.ndim else (u if theta == 0 else out)


def limiter_basis_monomial_guard(spec: BasisSpec) -> bool:
    return spec.kind == FULL_MONOMIAL
