"""Equilibria, quadratic approximation, stability, characteristic oscillations.

Modes solve the pencil problem Omega xi = lambda alpha xi by Cholesky
whitening of the kinetic matrix alpha; eigenvectors come out
alpha-orthonormal and eigenvalues ascending.  Classification follows the
four definiteness cases of the potential Hessian: positive definite is
stable, negative definite unstable, singular degenerate, and indefinite
nondegenerate a saddle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from . import expr as ex
from .systems import LagrangianSystem

__all__ = [
    "Equilibrium",
    "ModeSet",
    "find_equilibrium",
    "quadratic_approx",
    "normal_modes",
    "mode_solution",
    "classify_hessian",
    "NEWTON_TOL",
    "EIG_TOL",
]

NEWTON_TOL = 1e-10
EIG_TOL = 1e-8   # relative to |Omega| for the lambda = 0 test


@dataclass(frozen=True)
class Equilibrium:
    q0: np.ndarray
    grad_norm: float
    classification: str  # stable | unstable | degenerate | saddle


def classify_hessian(omega: np.ndarray, eig_tol: float = EIG_TOL) -> str:
    lam = np.linalg.eigvalsh(omega)
    scale = max(float(np.max(np.abs(lam))), 0.0)
    tol = eig_tol * scale if scale > 0 else eig_tol
    if np.any(np.abs(lam) <= tol):
        return "degenerate"
    if np.all(lam > 0):
        return "stable"
    if np.all(lam < 0):
        return "unstable"
    return "saddle"


def _potential_jet(sys: LagrangianSystem, q: np.ndarray) -> ex.SecondOrderJet:
    if sys.potential is None:
        n = sys.n
        return ex.SecondOrderJet(0.0, np.zeros(n), np.zeros((n, n)))
    return ex.jet2(sys.potential, sys.coords, q, sys.params)


def find_equilibrium(sys: LagrangianSystem, guess,
                     newton_tol: float = NEWTON_TOL,
                     max_iter: int = 100) -> Equilibrium:
    """Newton iteration on grad V = 0 from the guess.

    Falls back to small gradient-descent steps whenever the Hessian is
    singular at an iterate.  The returned classification comes from the
    spectrum of the potential Hessian at the solution.
    """
    q = np.asarray(guess, dtype=float).copy()
    for _ in range(max_iter):
        jet = _potential_jet(sys, q)
        gnorm = float(np.linalg.norm(jet.gradient, np.inf))
        if gnorm <= newton_tol:
            return Equilibrium(q, gnorm, classify_hessian(jet.hessian))
        h = jet.hessian
        det = np.linalg.det(h)
        scale = max(float(np.linalg.norm(h, np.inf)), 1.0)
        if abs(det) > 1e-12 * scale ** sys.n:
            q = q - np.linalg.solve(h, jet.gradient)
        else:
            q = q - (0.1 / scale) * jet.gradient
    raise RuntimeError(f"equilibrium search did not converge (|grad| = {gnorm:.3e})")


def quadratic_approx(sys: LagrangianSystem, q0) -> tuple[np.ndarray, np.ndarray]:
    """(alpha, Omega): kinetic matrix at q0 and potential Hessian at q0.

    alpha is the velocity Hessian of L at (q0, 0), which for metric
    Lagrangians equals g(q0); raises if it is not positive definite
    (kinetic energy must be positive).
    """
    q0 = np.asarray(q0, dtype=float)
    alpha = sys.lagrangian_jet_qdot(q0, np.zeros(sys.n)).hessian
    try:
        np.linalg.cholesky(alpha)
    except np.linalg.LinAlgError:
        raise ValueError("kinetic matrix is not positive definite at q0") from None
    omega = _potential_jet(sys, q0).hessian
    return alpha, omega


@dataclass(frozen=True)
class ModeSet:
    alpha: np.ndarray
    omega_mat: np.ndarray
    eigenvalues: np.ndarray    # ascending
    eigenvectors: np.ndarray   # columns, alpha-orthonormal
    frequencies: np.ndarray    # sqrt(lambda) where lambda > 0, else nan

    @property
    def n(self) -> int:
        return len(self.eigenvalues)


def normal_modes(alpha: np.ndarray, omega_mat: np.ndarray,
                 eig_tol: float = EIG_TOL) -> ModeSet:
    """Solve Omega xi = lambda alpha xi by whitening alpha = C C^T."""
    alpha = np.asarray(alpha, dtype=float)
    omega_mat = np.asarray(omega_mat, dtype=float)
    try:
        c = np.linalg.cholesky(alpha)
    except np.linalg.LinAlgError:
        raise ValueError("alpha must be symmetric positive definite") from None
    white = sla.solve_triangular(c, sla.solve_triangular(c, omega_mat, lower=True).T,
                                 lower=True)
    white = 0.5 * (white + white.T)
    lam, w = np.linalg.eigh(white)
    xi = sla.solve_triangular(c.T, w, lower=False)
    # fix signs: largest-magnitude component of each mode positive
    for k in range(xi.shape[1]):
        j = int(np.argmax(np.abs(xi[:, k])))
        if xi[j, k] < 0:
            xi[:, k] = -xi[:, k]
    scale = max(float(np.max(np.abs(lam))), 0.0)
    tol = eig_tol * scale if scale > 0 else eig_tol
    freq = np.where(lam > tol, np.sqrt(np.clip(lam, 0.0, None)), np.nan)
    return ModeSet(alpha, omega_mat, lam, xi, freq)


def mode_solution(modes: ModeSet, q_init, qdot_init, t,
                  eig_tol: float = EIG_TOL):
    """Exact linearized motion q(t) from initial displacement and velocity.

    Per mode: cos/sin for lambda > 0, cosh/sinh for lambda < 0, affine for
    lambda within tolerance of zero.  t may be a scalar or an array; the
    result has shape (n,) or (len(t), n).
    """
    q_init = np.asarray(q_init, dtype=float)
    qdot_init = np.asarray(qdot_init, dtype=float)
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    n = modes.n
    xi = modes.eigenvectors
    lam = modes.eigenvalues
    scale = max(float(np.max(np.abs(lam))), 0.0)
    tol = eig_tol * scale if scale > 0 else eig_tol

    # mode coordinates via alpha-orthonormality: Q = xi^T alpha q
    Q0 = xi.T @ (modes.alpha @ q_init)
    Qd0 = xi.T @ (modes.alpha @ qdot_init)

    Q = np.empty((len(t_arr), n))
    for k in range(n):
        lk = lam[k]
        if abs(lk) <= tol:
            Q[:, k] = Q0[k] + Qd0[k] * t_arr
        elif lk > 0:
            w = np.sqrt(lk)
            Q[:, k] = Q0[k] * np.cos(w * t_arr) + (Qd0[k] / w) * np.sin(w * t_arr)
        else:
            w = np.sqrt(-lk)
            Q[:, k] = Q0[k] * np.cosh(w * t_arr) + (Qd0[k] / w) * np.sinh(w * t_arr)
    out = Q @ xi.T
    return out[0] if np.isscalar(t) or np.asarray(t).ndim == 0 else out
