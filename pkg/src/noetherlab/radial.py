"""Unit-mass motion in radial potentials; Newton potential and Kepler's laws.

The radial problem reduces to 1-d motion in V_eff(r) = V(r) + L^2/(2 r^2);
quadratures in t and phi use the turning-point substitution r = r_t +- u^2
before adaptive quadrature so the inverse-square-root endpoints integrate
cleanly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate as sciint
from scipy import optimize as sciopt

from . import expr as ex
from .integrate import Trajectory

__all__ = [
    "EffectiveProfile",
    "KeplerElements",
    "newton_potential",
    "v_eff",
    "kepler_profile",
    "turning_points",
    "effective_profile",
    "kepler_elements",
    "orbit_trace",
    "t_of_r",
    "phi_of_r",
    "swept_area",
    "SweptArea",
    "measure_period",
    "ROOT_TOL",
    "QUAD_TOL",
]

ROOT_TOL = 1e-12   # relative, for turning-point bisection
QUAD_TOL = 1e-9    # relative, for time/angle quadratures


def newton_potential(M: float = 1.0) -> ex.Expr:
    """V(r) = -M/r as an expression in the single variable r."""
    return ex.parse_expression("-M/rr", ["rr"], ["M"])


class _VEff:
    """Callable V_eff(r) built from a potential expression in one variable."""

    def __init__(self, V: ex.Expr, L: float, params: dict | None = None):
        free = ex.free_variables(V)
        if len(free) != 1:
            raise ValueError(f"potential must have one free variable, got {sorted(free)}")
        self.var = next(iter(free))
        self.fn = ex.compile_value(V, [self.var], params or {})
        self.L2half = 0.5 * L * L

    def __call__(self, r: float) -> float:
        if r <= 0:
            raise ValueError("radius must be positive")
        if self.L2half == 0.0:
            return self.fn((r,))
        return self.fn((r,)) + self.L2half / (r * r)


def v_eff(V: ex.Expr, L: float, r: float, params: dict | None = None) -> float:
    """Effective potential V(r) + L^2/(2 r^2)."""
    return _VEff(V, L, params)(r)


def kepler_profile(M: float, L: float) -> dict:
    """Landmarks of f(r) = -M/r + L^2/(2 r^2): zero, minimum, depth."""
    if M <= 0 or L <= 0:
        raise ValueError("M and L must be positive")
    return {
        "r0": L * L / (2.0 * M),
        "r_min": L * L / M,
        "f_min": -M * M / (2.0 * L * L),
    }


def turning_points(V: ex.Expr, L: float, E: float,
                   bracket: tuple[float, float],
                   params: dict | None = None,
                   scan_points: int = 2048) -> list[float]:
    """Roots of E = V_eff(r) inside the bracket, sorted ascending.

    Log-spaced scan for sign changes refined by bisection to ROOT_TOL
    (relative); tangent (double) roots are recovered by polishing interior
    extrema of E - V_eff that sit within root tolerance of zero.
    """
    lo, hi = bracket
    if not (0 < lo < hi):
        raise ValueError("bracket must satisfy 0 < lo < hi")
    veff = _VEff(V, L, params)

    def h(r):
        return E - veff(r)

    grid = np.geomspace(lo, hi, scan_points)
    vals = np.array([h(r) for r in grid])
    roots: list[float] = []

    for i in range(len(grid) - 1):
        a, b = grid[i], grid[i + 1]
        fa, fb = vals[i], vals[i + 1]
        if fa == 0.0:
            roots.append(float(a))
            continue
        if fa * fb < 0.0:
            roots.append(float(sciopt.brentq(h, a, b, xtol=1e-300, rtol=ROOT_TOL)))
    if vals[-1] == 0.0:
        roots.append(float(grid[-1]))

    # tangency: local extrema of h that graze zero but never cross
    scale = max(abs(E), 1.0)
    interior = np.where((vals[1:-1] >= vals[:-2]) & (vals[1:-1] >= vals[2:]))[0] + 1
    for i in interior:
        if vals[i] > 0.0:
            continue  # a crossing pair already caught it
        res = sciopt.minimize_scalar(lambda r: -h(r), bounds=(grid[i - 1], grid[i + 1]),
                                     method="bounded",
                                     options={"xatol": ROOT_TOL * grid[i]})
        if abs(h(res.x)) <= 1e-9 * scale:
            roots.append(float(res.x))

    roots.sort()
    merged: list[float] = []
    for r in roots:
        if not merged or abs(r - merged[-1]) > 1e-9 * max(r, 1.0):
            merged.append(r)
    return merged


@dataclass(frozen=True)
class EffectiveProfile:
    V: ex.Expr
    L: float
    E: float
    turning_points: tuple[float, ...]
    classification: str  # bounded | unbounded | circular | collision


def effective_profile(V: ex.Expr, L: float, E: float,
                      bracket: tuple[float, float],
                      params: dict | None = None) -> EffectiveProfile:
    """Classify the radial motion at energy E inside the bracket."""
    roots = turning_points(V, L, E, bracket, params)
    veff = _VEff(V, L, params)
    inner_open = E > veff(bracket[0])
    outer_open = E > veff(bracket[1])
    if inner_open:
        kind = "collision"
    elif outer_open:
        kind = "unbounded"
    elif len(roots) >= 2:
        kind = "bounded"
    elif len(roots) == 1:
        kind = "circular"
    else:
        raise ValueError("energy below the minimum of V_eff: no motion")
    return EffectiveProfile(V, L, E, tuple(roots), kind)


# ---------------------------------------------------------------------------
# Kepler elements
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KeplerElements:
    M: float
    L: float
    E: float
    p: float                  # semi-latus rectum L^2/M
    eccentricity: float
    r_per: float
    r_aph: float | None       # None for unbound orbits
    a: float | None           # semi-major axis (bound only)
    b: float | None           # semi-minor axis (bound only)
    T: float | None           # period (bound only)


def kepler_elements(M: float, L: float, E: float) -> KeplerElements:
    """Orbit elements for the Newton potential at energy E.

    The perihelion comes from the positive root of r^2 + (M/E) r - L^2/(2E);
    eccentricity is then pinned operationally by r_per = p/(1 + eps).  For
    E = 0 the quadratic degenerates and the limit root L^2/(2M) is used.
    """
    if M <= 0 or L <= 0:
        raise ValueError("M and L must be positive")
    prof = kepler_profile(M, L)
    if E < prof["f_min"] - 1e-15 * abs(prof["f_min"]):
        raise ValueError(f"E={E} below minimum energy {prof['f_min']}")
    p = L * L / M

    if E == 0.0:
        r_per = L * L / (2.0 * M)
        r_aph = None
    else:
        disc = max(1.0 + 2.0 * L * L * E / (M * M), 0.0)
        root = math.sqrt(disc)
        if E > 0.0:
            r_per = M / (2.0 * E) * (-1.0 + root)
            r_aph = None
        else:
            r_per = M / (2.0 * abs(E)) * (1.0 - root)
            r_aph = M / (2.0 * abs(E)) * (1.0 + root)

    eps = p / r_per - 1.0
    if abs(eps) < 1e-12:
        eps = 0.0
        r_per = p
    a = b = T = None
    if E < 0.0:
        a = p / (1.0 - eps * eps)
        b = p / math.sqrt(1.0 - eps * eps)
        T = 2.0 * math.pi * a ** 1.5 / math.sqrt(M)
    return KeplerElements(M, L, E, p, eps, r_per, r_aph, a, b, T)


def orbit_trace(elements: KeplerElements, phi: Sequence[float]):
    """Polar samples r(phi) = p/(1 + eps cos phi) on the given grid.

    Grid points violating eps*cos(phi) > -1 (possible for parabolic and
    hyperbolic orbits) are skipped and flagged in the returned mask.
    """
    phi = np.asarray(phi, dtype=float)
    denom = 1.0 + elements.eccentricity * np.cos(phi)
    ok = denom > 1e-12
    r = np.full_like(phi, np.nan)
    r[ok] = elements.p / denom[ok]
    x = r * np.cos(phi)
    y = r * np.sin(phi)
    return phi, r, x, y, ok


# ---------------------------------------------------------------------------
# Quadratures
# ---------------------------------------------------------------------------

def _leg_quad(integrand, a: float, b: float, turn_a: bool, turn_b: bool) -> float:
    """Integrate integrand(r)/sqrt(g(r)) type legs with endpoint handling.

    ``integrand(r)`` must already include the 1/sqrt factor; endpoints
    flagged as turning points are regularized with r = a + u^2 (resp.
    b - u^2) which turns the inverse square root into a bounded function.
    """
    if b == a:
        return 0.0
    mid = 0.5 * (a + b)
    total = 0.0
    if turn_a:
        width = mid - a
        total += sciint.quad(lambda u: 2.0 * u * integrand(a + u * u),
                             0.0, math.sqrt(width),
                             epsabs=1e-13, epsrel=QUAD_TOL, limit=200)[0]
    else:
        total += sciint.quad(integrand, a, mid,
                             epsabs=1e-13, epsrel=QUAD_TOL, limit=200)[0]
    if turn_b:
        width = b - mid
        total += sciint.quad(lambda u: 2.0 * u * integrand(b - u * u),
                             0.0, math.sqrt(width),
                             epsabs=1e-13, epsrel=QUAD_TOL, limit=200)[0]
    else:
        total += sciint.quad(integrand, mid, b,
                             epsabs=1e-13, epsrel=QUAD_TOL, limit=200)[0]
    return total


def _radial_leg(V, L, E, r_a, r_b, params, weight) -> float:
    if r_a > r_b:
        raise ValueError("need r_a <= r_b")
    if r_a == r_b:
        return 0.0
    veff = _VEff(V, L, params)

    def gap(r):
        return 2.0 * (E - veff(r))

    def integrand(r):
        g = gap(r)
        if g <= 0.0:
            if g > -1e-12 * max(abs(E), 1.0):
                g = 0.0  # grazing a turning point inside the substitution
            else:
                raise ValueError(f"E <= V_eff at r={r}: leg crosses a forbidden region")
        return weight(r) / math.sqrt(g) if g > 0 else 0.0

    scale = max(abs(E), 1.0)

    def near_gap(r):
        # endpoint classification at a slightly inset radius so legs may
        # start at r = 0 for potentials singular there (free fall)
        inset = 1e-12 * (r_b - r_a)
        try:
            g = gap(min(max(r, r_a + inset), r_b - inset))
        except (ZeroDivisionError, ValueError, OverflowError):
            return math.inf
        return g if math.isfinite(g) else math.inf

    turn_a = abs(near_gap(r_a)) <= 1e-9 * scale
    turn_b = abs(near_gap(r_b)) <= 1e-9 * scale
    return _leg_quad(integrand, r_a, r_b, turn_a, turn_b)


def t_of_r(V: ex.Expr, L: float, E: float, r_a: float, r_b: float,
           params: dict | None = None) -> float:
    """Elapsed time along a monotone radial leg: t = int dr/sqrt(2(E-V_eff))."""
    return _radial_leg(V, L, E, r_a, r_b, params, lambda r: 1.0)


def phi_of_r(V: ex.Expr, L: float, E: float, r_a: float, r_b: float,
             params: dict | None = None) -> float:
    """Angle swept along a monotone radial leg:
    phi = L int dr/(r^2 sqrt(2(E-V_eff)))."""
    if L == 0.0:
        return 0.0
    return _radial_leg(V, L, E, r_a, r_b, params, lambda r: L / (r * r))


# ---------------------------------------------------------------------------
# Swept area and measured periods along planar trajectories
# ---------------------------------------------------------------------------

@dataclass
class SweptArea:
    """Cumulative area swept by the position vector of a planar trajectory."""

    t: np.ndarray
    cumulative: np.ndarray

    def between(self, t0: float, t1: float) -> float:
        a0 = float(np.interp(t0, self.t, self.cumulative))
        a1 = float(np.interp(t1, self.t, self.cumulative))
        return a1 - a0


def swept_area(traj: Trajectory, plane: tuple[int, int] = (0, 1)) -> SweptArea:
    """Shoelace accumulation sum 1/2 |q_k x q_{k+1}| over stored samples."""
    i, j = plane
    x = traj.q[:, i]
    y = traj.q[:, j]
    r2 = x * x + y * y
    if np.any(r2 <= 0.0):
        raise ValueError("trajectory crosses the origin; swept area undefined")
    cross = x[:-1] * y[1:] - y[:-1] * x[1:]
    inc = 0.5 * np.abs(cross)
    cum = np.concatenate([[0.0], np.cumsum(inc)])
    return SweptArea(traj.t.copy(), cum)


def measure_period(traj: Trajectory) -> float:
    """Orbital period from successive radial minima (first return of
    (r, sign rdot)), refined by parabolic interpolation through each minimum.
    """
    r = traj.radii()
    t = traj.t
    mins = np.where((r[1:-1] < r[:-2]) & (r[1:-1] <= r[2:]))[0] + 1
    if len(mins) < 2:
        raise ValueError("trajectory shorter than one radial period")

    def refine(k):
        t0, t1, t2 = t[k - 1], t[k], t[k + 1]
        f0, f1, f2 = r[k - 1], r[k], r[k + 1]
        denom = (f0 - 2.0 * f1 + f2)
        if denom == 0.0:
            return t1
        return t1 + 0.5 * (t1 - t0) * (f0 - f2) / denom

    return refine(mins[1]) - refine(mins[0])
