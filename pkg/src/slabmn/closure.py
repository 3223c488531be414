"""Closed fluxes, numerical fluxes and characteristic decompositions.

Entropy closures carry multipliers ``alpha`` (ansatz ``exp(b^T alpha)``);
linear closures carry the moments themselves (ansatz ``b^T M^-1 u``).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import PARTIAL, NodalBasis
from .entropy_solver import ansatz_values, dense_hessian

ENTROPY = "entropy"
LINEAR = "linear"


class DegenerateState(ArithmeticError):
    pass


@dataclass(frozen=True)
class EigenDecomposition:
    V: np.ndarray
    V_inv: np.ndarray
    lambdas: np.ndarray


@dataclass(frozen=True)
class ClosureKind:
    tag: str
    nb: NodalBasis
    A: np.ndarray | None = field(default=None, repr=False)
    A_pos: np.ndarray | None = field(default=None, repr=False)
    A_neg: np.ndarray | None = field(default=None, repr=False)
    M_inv: np.ndarray | None = field(default=None, repr=False)

    @property
    def is_entropy(self) -> bool:
        return self.tag == ENTROPY


def entropy_closure(nb: NodalBasis) -> ClosureKind:
    return ClosureKind(ENTROPY, nb)


def linear_closure(nb: NodalBasis) -> ClosureKind:
    M_inv = np.linalg.inv(nb.mass_matrix)
    return ClosureKind(
        LINEAR, nb,
        A=nb.flux_mass_matrix @ M_inv,
        A_pos=nb.half_flux_mass_matrix(+1) @ M_inv,
        A_neg=nb.half_flux_mass_matrix(-1) @ M_inv,
        M_inv=M_inv,
    )


def make_closure(nb: NodalBasis, tag: str) -> ClosureKind:
    if tag == ENTROPY:
        return entropy_closure(nb)
    if tag == LINEAR:
        return linear_closure(nb)
    raise ValueError(f"unknown closure {tag!r}")


def _batch(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    return np.atleast_2d(x), x.ndim == 1


def flux(closure: ClosureKind, state) -> np.ndarray:
    """<mu b psi>; ``state`` is alpha (entropy) or u (linear), batched or not."""
    s, single = _batch(state)
    if closure.is_entropy:
        nb = closure.nb
        out = nb.moments_of(ansatz_values(nb, s), weight=nb.mu)
    else:
        out = s @ closure.A.T
    return out[0] if single else out


def half_flux(closure: ClosureKind, state, sign: int) -> np.ndarray:
    """<mu b psi>_+ (sign > 0) or <mu b psi>_- (sign < 0)."""
    s, single = _batch(state)
    nb = closure.nb
    if closure.is_entropy:
        mask = nb.pos if sign > 0 else nb.neg
        out = nb.moments_of(ansatz_values(nb, s), weight=nb.mu * mask)
    else:
        out = s @ (closure.A_pos if sign > 0 else closure.A_neg).T
    return out[0] if single else out


def kinetic_flux(closure: ClosureKind, left, right) -> np.ndarray:
    """<mu b psi_left>_+ + <mu b psi_right>_-."""
    return half_flux(closure, left, +1) + half_flux(closure, right, -1)


def lax_friedrichs_flux(closure: ClosureKind, u1, u2, state1=None, state2=None, C: float = 1.0):
    """Global Lax-Friedrichs flux; entropy closures need the multipliers too."""
    s1 = u1 if state1 is None else state1
    s2 = u2 if state2 is None else state2
    return 0.5 * (flux(closure, s1) + flux(closure, s2) - C * (np.asarray(u2) - np.asarray(u1)))


def _pair(closure: ClosureKind, state) -> tuple[np.ndarray, np.ndarray]:
    """The symmetric pair (A_s, H) with J = A_s H^-1, batched."""
    s, _ = _batch(state)
    nb = closure.nb
    if closure.is_entropy:
        psi = ansatz_values(nb, s)
        return dense_hessian(nb, psi, weight=nb.mu), dense_hessian(nb, psi)
    m = s.shape[0]
    return (np.broadcast_to(nb.flux_mass_matrix, (m, nb.n, nb.n)),
            np.broadcast_to(nb.mass_matrix, (m, nb.n, nb.n)))


def jacobian(closure: ClosureKind, state) -> np.ndarray:
    s, single = _batch(state)
    if not closure.is_entropy:
        J = np.broadcast_to(closure.A, (s.shape[0], closure.nb.n, closure.nb.n)).copy()
    else:
        As, H = _pair(closure, s)
        try:
            # J = A_s H^-1  <=>  J^T = H^-1 A_s (both symmetric)
            J = np.swapaxes(np.linalg.solve(H, As), 1, 2)
        except np.linalg.LinAlgError as exc:
            raise DegenerateState("singular Hessian in flux Jacobian") from exc
    return J[0] if single else J


def _generalized_eig(As: np.ndarray, H: np.ndarray):
    """Solve A_s x = lambda H x through H = L L^T; returns (lam, V, V_inv, ok).

    With L^-1 A_s L^-T = Z diag(lam) Z^T, the right eigenvectors of
    J = A_s H^-1 are the columns of V = L Z and V^-1 = Z^T L^-1.
    """
    m, n, _ = H.shape
    ok = np.ones(m, dtype=bool)
    L = np.empty_like(H)
    try:
        L[:] = np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        for i in range(m):
            try:
                L[i] = np.linalg.cholesky(H[i])
            except np.linalg.LinAlgError:
                ok[i] = False
                L[i] = np.eye(n)
    Linv = np.linalg.inv(L)
    S = Linv @ As @ np.swapaxes(Linv, 1, 2)
    S = 0.5 * (S + np.swapaxes(S, 1, 2))
    lam, Z = np.linalg.eigh(S)
    V = L @ Z
    V_inv = np.swapaxes(Z, 1, 2) @ Linv
    ok &= np.all(np.isfinite(V), axis=(1, 2)) & np.all(np.isfinite(V_inv), axis=(1, 2))
    return lam, V, V_inv, ok


def characteristic_batch(closure: ClosureKind, state):
    """Eigen-decompositions of the flux Jacobians for a batch of states.

    Returns (lam, V, V_inv, ok); rows with ``ok`` False are degenerate and
    carry identity matrices.  Partial moments are handled per 2x2 block.
    """
    s, _ = _batch(state)
    nb = closure.nb
    As, H = _pair(closure, s)
    m, n = s.shape
    if nb.spec.kind != PARTIAL:
        lam, V, V_inv, ok = _generalized_eig(np.asarray(As, dtype=float), np.asarray(H, dtype=float))
    else:
        k = n // 2
        blocks = np.arange(k)
        ia = 2 * blocks
        # gather the 2x2 diagonal blocks into shape (m*k, 2, 2)
        idx = np.stack([ia, ia + 1], axis=1)
        Ab = np.asarray(As)[:, idx[:, :, None], idx[:, None, :]].reshape(m * k, 2, 2)
        Hb = np.asarray(H)[:, idx[:, :, None], idx[:, None, :]].reshape(m * k, 2, 2)
        lb, Vb, Vib, okb = _generalized_eig(Ab, Hb)
        lam = lb.reshape(m, n)
        V = np.zeros((m, n, n))
        V_inv = np.zeros((m, n, n))
        Vb = Vb.reshape(m, k, 2, 2)
        Vib = Vib.reshape(m, k, 2, 2)
        for j in range(k):
            sl = slice(2 * j, 2 * j + 2)
            V[:, sl, sl] = Vb[:, j]
            V_inv[:, sl, sl] = Vib[:, j]
        ok = okb.reshape(m, k).all(axis=1)
    eye = np.eye(n)
    V[~ok] = eye
    V_inv[~ok] = eye
    return lam, V, V_inv, ok


def eigendecompose(J: np.ndarray, H: np.ndarray | None = None) -> EigenDecomposition:
    """Real eigen-decomposition of a single Jacobian.

    With ``H`` given, ``J H`` is symmetric and the generalized route is used;
    otherwise a general eigensolve whose spectrum must come out real.
    """
    J = np.asarray(J, dtype=float)
    if H is not None:
        As = J @ H
        lam, V, V_inv, ok = _generalized_eig(0.5 * (As + As.T)[None], np.asarray(H, dtype=float)[None])
        if not ok[0]:
            raise DegenerateState("Cholesky factorization of H failed")
        return EigenDecomposition(V[0], V_inv[0], lam[0])
    lam, V = np.linalg.eig(J)
    if np.max(np.abs(lam.imag)) > 1e-10 * max(1.0, np.max(np.abs(lam.real))):
        raise DegenerateState("Jacobian has complex eigenvalues")
    lam, V = lam.real, V.real
    order = np.argsort(lam)
    lam, V = lam[order], V[:, order]
    try:
        V_inv = np.linalg.inv(V)
    except np.linalg.LinAlgError as exc:
        raise DegenerateState("Jacobian is not diagonalizable") from exc
    return EigenDecomposition(V, V_inv, lam)


def decomposition_of(closure: ClosureKind, state) -> EigenDecomposition:
    lam, V, V_inv, ok = characteristic_batch(closure, np.atleast_2d(state))
    if not ok[0]:
        raise DegenerateState("degenerate state in eigendecomposition")
    return EigenDecomposition(V[0], V_inv[0], lam[0])
