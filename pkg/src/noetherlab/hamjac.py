"""Hamilton-Jacobi solution families and the planar two-center problem.

A family S(x, u) solves the Hamilton-Jacobi equation iff H(x, dS^u|_x) is
constant in x for each parameter vector u; `hj_residual` measures the
worst max-min spread of that quantity over a grid.  The two-center problem
separates in confocal elliptic coordinates xi = r1 + r2, eta = r1 - r2;
this module carries the coordinate change, the separated Hamiltonian, the
quadrature action and the separation-constant audit along real motions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate as sciint

from . import expr as ex
from .integrate import Trajectory
from .systems import LagrangianSystem, PhaseState, hamiltonian

__all__ = [
    "HJFamily",
    "TwoCenterConfig",
    "hj_residual",
    "HJResidualReport",
    "family_nondegeneracy",
    "elliptic_coords",
    "elliptic_inverse",
    "elliptic_metric",
    "elliptic_jacobian",
    "cartesian_to_elliptic_phase",
    "two_center_hamiltonian",
    "two_center_system",
    "two_center_action",
    "two_center_family",
    "kepler_radial_family",
    "separation_constants",
    "HJ_TOL",
    "MIXED_FD_H",
    "AXIS_MARGIN",
]

HJ_TOL = 1e-8
MIXED_FD_H = 1e-6
AXIS_MARGIN = 1e-8


class ForbiddenRegionError(ValueError):
    """A quadrature leg crossed into the classically forbidden region."""

    def __init__(self, interval: tuple[float, float], detail: str = ""):
        super().__init__(f"negative radicand inside {interval}: {detail}")
        self.interval = interval


@dataclass(frozen=True)
class HJFamily:
    """n-parameter family of Hamilton-Jacobi solutions.

    Specified by its x-gradient components (expressions in x-names and
    u-names); the value S itself is optional (quadrature-defined families
    only know it up to an anchored integral).
    """

    x_names: tuple[str, ...]
    u_names: tuple[str, ...]
    grad_exprs: tuple[ex.Expr, ...]
    value_fn: Callable | None = None   # value_fn(x, u) -> float
    params: dict | None = None
    domain: str = ""

    @classmethod
    def from_expr(cls, S, x_names: Sequence[str], u_names: Sequence[str],
                  params: dict | None = None, domain: str = "") -> "HJFamily":
        names = tuple(x_names) + tuple(u_names)
        p_names = tuple((params or {}).keys())
        s_expr = S if isinstance(S, ex.Expr) else ex.parse_expression(S, names, p_names)
        grads = []
        for i, xn in enumerate(x_names):
            # exact gradient via jets, wrapped per-component
            grads.append(None)

        def value_fn(x, u, _s=s_expr, _xn=tuple(x_names), _un=tuple(u_names)):
            binding = dict(params or {})
            binding.update(zip(_xn, x))
            binding.update(zip(_un, u))
            return ex.evaluate(_s, binding)

        fam = cls(tuple(x_names), tuple(u_names), (), value_fn, params, domain)
        object.__setattr__(fam, "_s_expr", s_expr)
        return fam

    @classmethod
    def from_gradient(cls, grad_sources: Sequence, x_names: Sequence[str],
                      u_names: Sequence[str], params: dict | None = None,
                      value_fn: Callable | None = None,
                      domain: str = "") -> "HJFamily":
        names = tuple(x_names) + tuple(u_names)
        p_names = tuple((params or {}).keys())
        grads = tuple(g if isinstance(g, ex.Expr)
                      else ex.parse_expression(g, names, p_names)
                      for g in grad_sources)
        return cls(tuple(x_names), tuple(u_names), grads, value_fn, params, domain)

    def grad_x(self, x: Sequence[float], u: Sequence[float]) -> np.ndarray:
        """dS^u/dx at (x, u); exact jets for expression families."""
        s_expr = getattr(self, "_s_expr", None)
        if s_expr is not None:
            all_params = dict(self.params or {})
            all_params.update(zip(self.u_names, u))
            return ex.jet2(s_expr, self.x_names, x, all_params).gradient
        binding = dict(self.params or {})
        binding.update(zip(self.x_names, x))
        binding.update(zip(self.u_names, u))
        out = np.array([ex.evaluate(g, binding) for g in self.grad_exprs])
        if not np.all(np.isfinite(out)):
            raise ValueError(f"gradient not finite at x={x}, u={u}")
        return out

    def value(self, x, u) -> float:
        if self.value_fn is None:
            raise ValueError("family has no value function (gradient-only)")
        return self.value_fn(x, u)


@dataclass(frozen=True)
class HJResidualReport:
    max_residual: float        # max over u of (max - min over x of H o dS)
    mean_residual: float
    skipped: int               # grid points where dS failed (flagged, not fatal)
    evaluated: int


def _as_h_callable(system_or_h) -> Callable:
    if isinstance(system_or_h, LagrangianSystem):
        def h(x, p, _sys=system_or_h):
            return hamiltonian(_sys, PhaseState(np.asarray(x, float),
                                                np.asarray(p, float)))
        return h
    return system_or_h


def hj_residual(system_or_h, family: HJFamily,
                x_grid: Sequence, u_grid: Sequence) -> HJResidualReport:
    """Spread of H(x, dS^u|_x) over the x-grid, worst case over the u-grid.

    Zero (up to tolerance) iff the family solves the HJ equation on the
    grid.  Points where the gradient evaluation fails (forbidden region,
    singular jets) are skipped and counted.
    """
    h = _as_h_callable(system_or_h)
    residuals = []
    skipped = 0
    evaluated = 0
    for u in u_grid:
        vals = []
        for x in x_grid:
            try:
                p = family.grad_x(x, u)
                val = h(x, p)
            except (ValueError, ZeroDivisionError, OverflowError):
                skipped += 1
                continue
            if not math.isfinite(val):
                skipped += 1
                continue
            vals.append(val)
            evaluated += 1
        if len(vals) >= 2:
            residuals.append(max(vals) - min(vals))
    if not residuals:
        raise ValueError("no usable grid points")
    return HJResidualReport(float(max(residuals)),
                            float(np.mean(residuals)), skipped, evaluated)


def family_nondegeneracy(family: HJFamily, points: Sequence[tuple]) -> float:
    """min |det d^2 S / dx du| over (x, u) pairs.

    Mixed partials: exact-in-x gradients differentiated in u by central
    differences with step MIXED_FD_H (exact for families polynomial in u).
    """
    n = len(family.x_names)
    best = math.inf
    for x, u in points:
        u = np.asarray(u, dtype=float)
        m = np.empty((n, n))
        for j in range(n):
            e = np.zeros(len(u))
            e[j] = MIXED_FD_H
            m[:, j] = (family.grad_x(x, u + e) - family.grad_x(x, u - e)) / (2 * MIXED_FD_H)
        best = min(best, abs(float(np.linalg.det(m))))
    return best


# ---------------------------------------------------------------------------
# Confocal elliptic coordinates (foci at (+-c, 0))
# ---------------------------------------------------------------------------

def _check_off_axes(x: float, y: float):
    if abs(x) <= AXIS_MARGIN or abs(y) <= AXIS_MARGIN:
        raise ValueError(f"point ({x}, {y}) is on or too close to a coordinate axis")


def elliptic_coords(x: float, y: float, c: float) -> tuple[float, float]:
    """(xi, eta) = (r1 + r2, r1 - r2) with foci (c, 0), (-c, 0)."""
    if c <= 0:
        raise ValueError("c must be positive")
    _check_off_axes(x, y)
    r1 = math.hypot(x - c, y)
    r2 = math.hypot(x + c, y)
    return r1 + r2, r1 - r2


def elliptic_inverse(xi: float, eta: float, c: float,
                     quadrant: int = 1) -> tuple[float, float]:
    """Cartesian point with the given (xi, eta), in the given quadrant.

    xi determines the confocal ellipse, |eta| the hyperbola branch; the
    sign of eta already fixes the sign of x, so the quadrant argument must
    be consistent with it and only selects the sign of y.
    """
    _check_elliptic_domain(xi, eta, c)
    if quadrant not in (1, 2, 3, 4):
        raise ValueError("quadrant must be 1..4")
    x = -xi * eta / (4.0 * c)
    x_positive = quadrant in (1, 4)
    if (x > 0) != x_positive:
        raise ValueError(f"eta={eta} implies sign(x)={'+' if x > 0 else '-'}, "
                         f"inconsistent with quadrant {quadrant}")
    r1 = 0.5 * (xi + eta)
    y_sq = r1 * r1 - (x - c) ** 2
    if y_sq <= 0:
        raise ValueError("point degenerates onto the x-axis")
    y = math.sqrt(y_sq)
    if quadrant in (3, 4):
        y = -y
    return x, y


def _check_elliptic_domain(xi: float, eta: float, c: float):
    if c <= 0:
        raise ValueError("c must be positive")
    if not (xi > 2 * c):
        raise ValueError(f"xi={xi} must exceed 2c={2*c}")
    if not (abs(eta) < 2 * c):
        raise ValueError(f"|eta|={abs(eta)} must be below 2c={2*c}")


def elliptic_metric(xi: float, eta: float, c: float) -> tuple[float, float]:
    """Diagonal metric coefficients (g_xixi, g_etaeta) of the Euclidean
    metric in confocal elliptic coordinates."""
    _check_elliptic_domain(xi, eta, c)
    diff = xi * xi - eta * eta
    return (diff / (4.0 * (xi * xi - 4.0 * c * c)),
            diff / (4.0 * (4.0 * c * c - eta * eta)))


def elliptic_jacobian(x: float, y: float, c: float) -> np.ndarray:
    """J[i, j] = d(xi, eta)_i / d(x, y)_j at the Cartesian point."""
    _check_off_axes(x, y)
    r1 = math.hypot(x - c, y)
    r2 = math.hypot(x + c, y)
    d1 = np.array([(x - c) / r1, y / r1])
    d2 = np.array([(x + c) / r2, y / r2])
    return np.array([d1 + d2, d1 - d2])


def cartesian_to_elliptic_phase(x: float, y: float, px: float, py: float,
                                c: float) -> tuple[float, float, float, float]:
    """Map a Cartesian phase-space point to (xi, eta, p_xi, p_eta).

    Momenta transform contravariantly to the coordinate differentials:
    p_cart = J^T p_elliptic with J the forward Jacobian.
    """
    xi, eta = elliptic_coords(x, y, c)
    jac = elliptic_jacobian(x, y, c)
    p_ell = np.linalg.solve(jac.T, np.array([px, py]))
    return xi, eta, float(p_ell[0]), float(p_ell[1])


# ---------------------------------------------------------------------------
# Two-center problem
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TwoCenterConfig:
    c: float                   # half-separation of the two centers
    k: float                   # attraction constant of each center
    C: float | None = None     # energy constant of the separated family
    c1: float | None = None    # second separation constant

    def __post_init__(self):
        if self.c <= 0 or self.k <= 0:
            raise ValueError("c and k must be positive")


def two_center_hamiltonian(state: Sequence[float], c: float, k: float) -> float:
    """H(xi, eta, p_xi, p_eta) of the separated two-center problem."""
    xi, eta, pxi, peta = state
    _check_elliptic_domain(xi, eta, c)
    diff = xi * xi - eta * eta
    return (2.0 * pxi * pxi * (xi * xi - 4.0 * c * c) / diff
            + 2.0 * peta * peta * (4.0 * c * c - eta * eta) / diff
            - 4.0 * k * xi / diff)


def two_center_system(c: float, k: float) -> LagrangianSystem:
    """Cartesian unit-mass system with V = -k/r1 - k/r2 (integration home)."""
    pot = ("-kk/sqrt((x - cc)^2 + y^2) - kk/sqrt((x + cc)^2 + y^2)")
    return LagrangianSystem.euclidean(["x", "y"], pot,
                                      params={"kk": k, "cc": c},
                                      excluded_desc="foci excluded")


def _xi_radicand(xi, C, c1, c, k):
    return (c1 + C * xi * xi + 4.0 * k * xi) / (2.0 * (xi * xi - 4.0 * c * c))


def _eta_radicand(eta, C, c1, c):
    return (-c1 - C * eta * eta) / (2.0 * (4.0 * c * c - eta * eta))


def two_center_action(xi: float, eta: float, config: TwoCenterConfig,
                      xi_anchor: float, eta_anchor: float = 0.0,
                      quad_tol: float = 1e-9) -> float:
    """S(xi, eta) by quadrature from fixed anchors.

    S = int_{xi_anchor}^{xi} sqrt((c1 + C s^2 + 4 k s)/(2(s^2 - 4c^2))) ds
      + int_{eta_anchor}^{eta} sqrt((-c1 - C s^2)/(2(4c^2 - s^2))) ds

    Anchors are fixed constants of the run so dS/du is well defined.
    Raises ForbiddenRegionError when a radicand is negative inside a leg.
    """
    if config.C is None or config.c1 is None:
        raise ValueError("config must carry the separation constants C and c1")
    C, c1, c, k = config.C, config.c1, config.c, config.k

    def leg(f, a, b):
        if a == b:
            return 0.0
        lo, hi = (a, b) if a < b else (b, a)
        for s in np.linspace(lo, hi, 64):
            if f(s) < 0:
                raise ForbiddenRegionError((lo, hi), f"radicand < 0 at {s}")
        val = sciint.quad(lambda s: math.sqrt(max(f(s), 0.0)), a, b,
                          epsabs=1e-13, epsrel=quad_tol, limit=200)[0]
        return val

    s_xi = leg(lambda s: _xi_radicand(s, C, c1, c, k), xi_anchor, xi)
    s_eta = leg(lambda s: _eta_radicand(s, C, c1, c), eta_anchor, eta)
    return s_xi + s_eta


def two_center_family(c: float, k: float, xi_anchor: float) -> HJFamily:
    """Two-parameter separated family with parameters u = (C, c1).

    Gradient components are the analytic positive branches; the value is
    the anchored quadrature.  Restricted to single monotone legs (the sign
    branches across turning points are not stitched).
    """
    gxi = "sqrt((c1 + C*xi^2 + 4*kk*xi)/(2*(xi^2 - 4*cc^2)))"
    geta = "sqrt((-c1 - C*eta^2)/(2*(4*cc^2 - eta^2)))"

    def value_fn(x, u):
        cfg = TwoCenterConfig(c, k, C=float(u[0]), c1=float(u[1]))
        return two_center_action(x[0], x[1], cfg, xi_anchor)

    return HJFamily.from_gradient([gxi, geta], ["xi", "eta"], ["C", "c1"],
                                  params={"cc": c, "kk": k}, value_fn=value_fn,
                                  domain=f"xi>2c, |eta|<2c, radicands >= 0; "
                                         f"anchors xi={xi_anchor}, eta=0")


def kepler_radial_family(M: float, r_anchor: float = 1.0) -> HJFamily:
    """Separated family S = L phi + int sqrt(2(E - V_eff)) dr, u = (E, L)."""
    grad_r = "sqrt(2*(E + MM/rr - L^2/(2*rr^2)))"

    def value_fn(x, u):
        r, phi = x
        E, L = u

        def integrand(s):
            return math.sqrt(max(2.0 * (E + M / s - L * L / (2 * s * s)), 0.0))
        val = sciint.quad(integrand, r_anchor, r, epsabs=1e-13, epsrel=1e-9,
                          limit=200)[0]
        return L * phi + val

    return HJFamily.from_gradient([grad_r, "L"], ["rr", "phi"], ["E", "L"],
                                  params={"MM": M}, value_fn=value_fn,
                                  domain="r inside the classically allowed annulus")


def separation_constants(traj: Trajectory, c: float, k: float):
    """(t, C(t), c1(t)) traces along a planar Cartesian trajectory.

    C is the energy; c1 = 2 p_xi^2 (xi^2 - 4c^2) - 4 k xi - C xi^2 must be
    constant for the two-center problem.  The trace truncates at the first
    sample outside the elliptic chart (axes, foci).
    """
    ts, cs, c1s = [], [], []
    for i in range(len(traj)):
        x, y = traj.q[i]
        px, py = traj.p[i]
        try:
            xi, eta, pxi, peta = cartesian_to_elliptic_phase(x, y, px, py, c)
            _check_elliptic_domain(xi, eta, c)
        except ValueError:
            break
        r1 = math.hypot(x - c, y)
        r2 = math.hypot(x + c, y)
        energy = 0.5 * (px * px + py * py) - k / r1 - k / r2
        c1 = 2.0 * pxi * pxi * (xi * xi - 4.0 * c * c) - 4.0 * k * xi - energy * xi * xi
        ts.append(traj.t[i])
        cs.append(energy)
        c1s.append(c1)
    if not ts:
        raise ValueError("trajectory starts outside the elliptic chart")
    return np.array(ts), np.array(cs), np.array(c1s)
