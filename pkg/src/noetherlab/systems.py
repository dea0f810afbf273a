"""Mechanical systems on a coordinate domain of R^n.

A system is either metric-based, L(q, qdot) = 1/2 qdot^T g(q) qdot - V(q),
or entered directly as a Lagrangian expression in the coordinates and
their ``<name>dot`` companions.  Either way, momenta and energies are
computed from exact jets of the Lagrangian in the velocity variables; the
closed-form metric expressions only serve as cross-checks and fast paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import expr as ex

__all__ = [
    "VelocityState",
    "PhaseState",
    "LagrangianSystem",
    "DegenerateMetricError",
    "InadmissibleStateError",
    "NondegeneracyReport",
    "christoffel",
    "lagrangian_value",
    "energy",
    "to_momenta",
    "to_velocities",
    "hamiltonian",
    "nondegeneracy_report",
    "legendre_transform",
    "legendre_double",
    "LegendreResult",
    "det_tol",
]


class DegenerateMetricError(ValueError):
    """Metric (or velocity Hessian) is singular at the requested point."""


class InadmissibleStateError(ValueError):
    """State violates the system's excluded set or dimension contract."""


@dataclass(frozen=True)
class VelocityState:
    q: np.ndarray
    qdot: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))
        object.__setattr__(self, "qdot", np.asarray(self.qdot, dtype=float))
        if self.q.shape != self.qdot.shape or self.q.ndim != 1:
            raise InadmissibleStateError("q and qdot must be 1-d and of equal length")


@dataclass(frozen=True)
class PhaseState:
    """Point of phase space in Darboux coordinates (q, p)."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))
        if self.q.shape != self.p.shape or self.q.ndim != 1:
            raise InadmissibleStateError("q and p must be 1-d and of equal length")


def det_tol(mat: np.ndarray) -> float:
    """Scale-aware determinant tolerance: 1e-10 * (inf-norm)^n.

    Guarded below by the smallest positive float so the zero matrix is
    always judged singular.
    """
    mat = np.asarray(mat, dtype=float)
    n = mat.shape[0]
    norm = float(np.linalg.norm(mat, np.inf)) if mat.size else 0.0
    return max(1e-10 * norm ** n, np.finfo(float).tiny)


def _velocity_names(coords: Sequence[str]) -> tuple[str, ...]:
    return tuple(f"{c}dot" for c in coords)


class LagrangianSystem:
    """Immutable description of a mechanical system.

    Construct with one of the classmethods:

    * :meth:`euclidean` - constant metric m * identity plus a potential
    * :meth:`from_metric` - symmetric matrix of expressions plus a potential
    * :meth:`from_lagrangian` - arbitrary L(q, qdot) expression
    """

    def __init__(self, coords, metric, potential, lagrangian, params,
                 admissible=None, excluded_desc: str = ""):
        self.coords: tuple[str, ...] = tuple(coords)
        self.n = len(self.coords)
        self.vel_names = _velocity_names(self.coords)
        self.metric = metric          # ndarray, matrix of Expr, or None
        self.potential = potential    # Expr or None
        self.lagrangian = lagrangian  # Expr in coords + vel_names
        self.params: dict[str, float] = dict(params or {})
        self.admissible: Callable[[np.ndarray], bool] | None = admissible
        self.excluded_desc = excluded_desc
        self._validate()
        self._build_caches()

    # -- construction -------------------------------------------------------

    @classmethod
    def euclidean(cls, coords: Sequence[str], potential, mass: float = 1.0,
                  params: Mapping[str, float] | None = None,
                  admissible=None, excluded_desc: str = "") -> "LagrangianSystem":
        n = len(coords)
        pot = cls._as_expr(potential, coords, params)
        metric = mass * np.eye(n)
        lag = cls._metric_lagrangian(coords, metric, pot)
        return cls(coords, metric, pot, lag, params, admissible, excluded_desc)

    @classmethod
    def from_metric(cls, coords: Sequence[str], metric_entries, potential,
                    params: Mapping[str, float] | None = None,
                    admissible=None, excluded_desc: str = "") -> "LagrangianSystem":
        n = len(coords)
        pot = cls._as_expr(potential, coords, params)
        entries = np.empty((n, n), dtype=object)
        all_const = True
        for i in range(n):
            for j in range(n):
                raw = metric_entries[i][j]
                if isinstance(raw, (int, float)):
                    entries[i, j] = ex.Num(float(raw))
                else:
                    entries[i, j] = cls._as_expr(raw, coords, params)
                    all_const = all_const and isinstance(entries[i, j], ex.Num)
                if j < i and entries[i, j] != entries[j, i]:
                    raise ValueError("metric entries must be symmetric")
        if all_const:
            metric = np.array([[entries[i, j].value for j in range(n)]
                               for i in range(n)])
        else:
            metric = entries
        lag = cls._metric_lagrangian(coords, metric, pot)
        return cls(coords, metric, pot, lag, params, admissible, excluded_desc)

    @classmethod
    def from_lagrangian(cls, coords: Sequence[str], lagrangian,
                        params: Mapping[str, float] | None = None,
                        admissible=None, excluded_desc: str = "") -> "LagrangianSystem":
        names = tuple(coords) + _velocity_names(coords)
        lag = cls._as_expr(lagrangian, names, params)
        return cls(coords, None, None, lag, params, admissible, excluded_desc)

    @staticmethod
    def _as_expr(source, variables, params) -> ex.Expr:
        if isinstance(source, ex.Expr):
            return source
        return ex.parse_expression(source, variables, tuple((params or {}).keys()))

    @staticmethod
    def _metric_lagrangian(coords, metric, potential: ex.Expr) -> ex.Expr:
        """Synthesize L = 1/2 sum g_ij qdot_i qdot_j - V as one tree."""
        n = len(coords)
        vels = _velocity_names(coords)
        kin: ex.Expr | None = None
        for i in range(n):
            for j in range(n):
                if isinstance(metric, np.ndarray) and metric.dtype != object:
                    if metric[i, j] == 0.0:
                        continue
                    gij: ex.Expr = ex.Num(float(metric[i, j]))
                else:
                    gij = metric[i, j]
                    if isinstance(gij, ex.Num) and gij.value == 0.0:
                        continue
                term = ex.Binary("*", gij, ex.Binary(
                    "*", ex.Var(vels[i]), ex.Var(vels[j])))
                kin = term if kin is None else ex.Binary("+", kin, term)
        if kin is None:
            kin = ex.Num(0.0)
        kin = ex.Binary("*", ex.Num(0.5), kin)
        return ex.Binary("-", kin, potential)

    # -- validation / caches ------------------------------------------------

    def _validate(self):
        allowed = set(self.coords) | set(self.vel_names)
        free = ex.free_variables(self.lagrangian)
        if not free <= allowed:
            raise ValueError(f"Lagrangian uses unknown variables: {sorted(free - allowed)}")
        missing = ex.free_parameters(self.lagrangian) - set(self.params)
        if self.potential is not None:
            if not ex.free_variables(self.potential) <= set(self.coords):
                raise ValueError("potential must depend on coordinates only")
            missing |= ex.free_parameters(self.potential) - set(self.params)
        if missing:
            raise ValueError(f"unbound parameters: {sorted(missing)}")

    def _build_caches(self):
        self._pot_vg = None
        if self.potential is not None:
            self._pot_vg = ex.compile_value_grad(self.potential, self.coords,
                                                 self.params)
        self._metric_fns = None
        if self.has_expr_metric:
            fns = np.empty((self.n, self.n), dtype=object)
            for i in range(self.n):
                for j in range(self.n):
                    fns[i, j] = ex.compile_value_grad(self.metric[i, j],
                                                      self.coords, self.params)
            self._metric_fns = fns

    # -- basic queries -------------------------------------------------------

    @property
    def is_metric(self) -> bool:
        return self.metric is not None

    @property
    def has_constant_metric(self) -> bool:
        return isinstance(self.metric, np.ndarray) and self.metric.dtype != object

    @property
    def has_expr_metric(self) -> bool:
        return self.is_metric and not self.has_constant_metric

    def check_admissible(self, q: np.ndarray) -> None:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.n,):
            raise InadmissibleStateError(
                f"state has dimension {q.shape}, system expects ({self.n},)")
        if not np.all(np.isfinite(q)):
            raise InadmissibleStateError("non-finite coordinates")
        if self.admissible is not None and not self.admissible(q):
            raise InadmissibleStateError(
                f"state in excluded set ({self.excluded_desc or 'predicate'})")

    def metric_at(self, q: np.ndarray) -> np.ndarray:
        """Evaluate g(q); raises DegenerateMetricError if singular there."""
        self.check_admissible(q)
        if not self.is_metric:
            raise ValueError("system has no metric (generic Lagrangian)")
        if self.has_constant_metric:
            g = self.metric
        else:
            g = np.array([[self._metric_fns[i, j](q)[0] for j in range(self.n)]
                          for i in range(self.n)])
        if abs(np.linalg.det(g)) < det_tol(g):
            raise DegenerateMetricError(f"metric singular at q={q!r}")
        return g

    def metric_partials(self, q: np.ndarray) -> np.ndarray:
        """dg[k, i, j] = d g_ij / d q^k, exact via compiled forward mode."""
        dg = np.zeros((self.n, self.n, self.n))
        if self.has_expr_metric:
            for i in range(self.n):
                for j in range(self.n):
                    _, grad = self._metric_fns[i, j](q)
                    dg[:, i, j] = grad
        return dg

    def potential_at(self, q: np.ndarray) -> float:
        if self.potential is None:
            return 0.0
        return self._pot_vg(q)[0]

    def potential_grad(self, q: np.ndarray) -> np.ndarray:
        if self.potential is None:
            return np.zeros(self.n)
        return np.asarray(self._pot_vg(q)[1])

    def lagrangian_jet_qdot(self, q: np.ndarray, qdot: np.ndarray) -> ex.SecondOrderJet:
        """Exact jet of L in the velocity variables at (q, qdot)."""
        params = dict(self.params)
        params.update(zip(self.coords, np.asarray(q, dtype=float)))
        return ex.jet2(self.lagrangian, self.vel_names, qdot, params)

    def lagrangian_jet_q(self, q: np.ndarray, qdot: np.ndarray) -> ex.SecondOrderJet:
        """Exact jet of L in the coordinates at (q, qdot)."""
        params = dict(self.params)
        params.update(zip(self.vel_names, np.asarray(qdot, dtype=float)))
        return ex.jet2(self.lagrangian, self.coords, q, params)

    def __repr__(self):
        kind = "metric" if self.is_metric else "generic"
        return f"LagrangianSystem({kind}, coords={self.coords}, params={self.params})"


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def christoffel(sys: LagrangianSystem, q: np.ndarray) -> np.ndarray:
    """Christoffel symbols Gamma[l, j, k] of the metric at q.

    Gamma^l_jk = 1/2 g^{li} (d_k g_ij + d_j g_ik - d_i g_jk); identically
    zero for constant metrics.
    """
    q = np.asarray(q, dtype=float)
    g = sys.metric_at(q)
    n = sys.n
    if sys.has_constant_metric:
        return np.zeros((n, n, n))
    dg = sys.metric_partials(q)  # dg[k, i, j] = d_k g_ij
    ginv = np.linalg.inv(g)
    # brackets[i, j, k] = 1/2 (d_k g_ij + d_j g_ik - d_i g_jk)
    brackets = 0.5 * (np.transpose(dg, (1, 2, 0))
                      + np.transpose(dg, (1, 0, 2))
                      - dg)
    gamma = np.einsum("li,ijk->ljk", ginv, brackets)
    # enforce exact symmetry in the lower pair
    return 0.5 * (gamma + np.transpose(gamma, (0, 2, 1)))


def lagrangian_value(sys: LagrangianSystem, s: VelocityState) -> float:
    sys.check_admissible(s.q)
    binding = dict(sys.params)
    binding.update(zip(sys.coords, s.q))
    binding.update(zip(sys.vel_names, s.qdot))
    return ex.evaluate(sys.lagrangian, binding)


def energy(sys: LagrangianSystem, s: VelocityState) -> float:
    """E = sum qdot_i dL/dqdot_i - L, from exact velocity jets."""
    sys.check_admissible(s.q)
    jet = sys.lagrangian_jet_qdot(s.q, s.qdot)
    return float(np.dot(s.qdot, jet.gradient) - jet.value)


def to_momenta(sys: LagrangianSystem, s: VelocityState) -> PhaseState:
    """Legendre map p = dL/dqdot, computed from exact jets."""
    sys.check_admissible(s.q)
    jet = sys.lagrangian_jet_qdot(s.q, s.qdot)
    return PhaseState(s.q.copy(), jet.gradient)


def to_velocities(sys: LagrangianSystem, s: PhaseState,
                  qdot_guess: np.ndarray | None = None,
                  max_iter: int = 50, tol: float = 1e-13) -> VelocityState:
    """Inverse Legendre map.

    Metric systems solve the linear system g(q) qdot = p; generic systems
    run Newton on dL/dqdot = p starting from ``qdot_guess``.
    """
    sys.check_admissible(s.q)
    if sys.is_metric:
        g = sys.metric_at(s.q)
        return VelocityState(s.q.copy(), np.linalg.solve(g, s.p))
    qdot = np.zeros(sys.n) if qdot_guess is None else np.asarray(qdot_guess, float)
    scale = max(float(np.linalg.norm(s.p, np.inf)), 1.0)
    for _ in range(max_iter):
        jet = sys.lagrangian_jet_qdot(s.q, qdot)
        res = jet.gradient - s.p
        if np.linalg.norm(res, np.inf) <= tol * scale:
            return VelocityState(s.q.copy(), qdot)
        hess = jet.hessian
        if abs(np.linalg.det(hess)) < det_tol(hess):
            raise DegenerateMetricError("velocity Hessian singular during inversion")
        qdot = qdot - np.linalg.solve(hess, res)
    raise DegenerateMetricError(
        f"Legendre inversion did not converge (residual {np.linalg.norm(res, np.inf):.3e})")


def hamiltonian(sys: LagrangianSystem, s: PhaseState) -> float:
    """H(q, p) = E(q, qdot(q, p)); for metric systems 1/2 p^T g^{-1} p + V."""
    if sys.is_metric:
        g = sys.metric_at(s.q)
        qdot = np.linalg.solve(g, s.p)
        return float(0.5 * np.dot(s.p, qdot) + sys.potential_at(s.q))
    return energy(sys, to_velocities(sys, s))


@dataclass(frozen=True)
class NondegeneracyReport:
    invertible: bool
    det: float
    condition: float
    hessian: np.ndarray = field(repr=False)


def nondegeneracy_report(sys: LagrangianSystem, s: VelocityState) -> NondegeneracyReport:
    """Check invertibility of the velocity Hessian of L at the state."""
    jet = sys.lagrangian_jet_qdot(s.q, s.qdot)
    h = jet.hessian
    d = float(np.linalg.det(h))
    cond = float(np.linalg.cond(h)) if abs(d) > 0 else np.inf
    return NondegeneracyReport(abs(d) >= det_tol(h), d, cond, h)


# ---------------------------------------------------------------------------
# Legendre transform of a function on R^n
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LegendreResult:
    x_star: np.ndarray
    f_tilde: float
    iterations: int
    residual: float


class LegendreConvergenceError(RuntimeError):
    def __init__(self, residual: float):
        super().__init__(f"Newton did not converge, final residual {residual:.3e}")
        self.residual = residual


def legendre_transform(f: ex.Expr, variables: Sequence[str], y: Sequence[float],
                       x_guess: Sequence[float],
                       params: Mapping[str, float] | None = None,
                       max_iter: int = 50, tol: float = 1e-10) -> LegendreResult:
    """Legendre transform f~(y) = <y, x*> - f(x*) with grad f(x*) = y.

    Newton iteration with Armijo backtracking on |grad f(x) - y|; the
    Hessian must stay positive definite along the way (checked through
    Cholesky), otherwise a ValueError is raised.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x_guess, dtype=float).copy()
    n = len(variables)
    if y.shape != (n,) or x.shape != (n,):
        raise ValueError("y and x_guess must match the variable count")

    def grad_hess(xv):
        jet = ex.jet2(f, variables, xv, params)
        return jet.value, jet.gradient, jet.hessian

    _, g, h = grad_hess(x)
    res = np.linalg.norm(g - y, np.inf)
    for it in range(max_iter):
        if res <= tol:
            value = ex.evaluate(f, {**(params or {}), **dict(zip(variables, x))})
            return LegendreResult(x, float(np.dot(y, x) - value), it, float(res))
        try:
            np.linalg.cholesky(h)
        except np.linalg.LinAlgError:
            raise ValueError("Hessian of f is not positive definite "
                             "near the iterate; Legendre transform undefined") from None
        step = np.linalg.solve(h, y - g)
        # Armijo backtracking on the residual norm
        t = 1.0
        for _ in range(30):
            x_new = x + t * step
            _, g_new, h_new = grad_hess(x_new)
            res_new = np.linalg.norm(g_new - y, np.inf)
            if res_new <= (1.0 - 0.25 * t) * res:
                break
            t *= 0.5
        x, g, h, res = x_new, g_new, h_new, res_new
    if res <= tol:
        value = ex.evaluate(f, {**(params or {}), **dict(zip(variables, x))})
        return LegendreResult(x, float(np.dot(y, x) - value), max_iter, float(res))
    raise LegendreConvergenceError(float(res))


def legendre_double(f: ex.Expr, variables: Sequence[str], x: Sequence[float],
                    params: Mapping[str, float] | None = None) -> float:
    """Evaluate the double Legendre transform (f~)~ at x.

    Uses grad f~ (y) = x*  <=>  y = grad f(x), so the outer inversion is
    available in closed form; the inner transform still runs Newton.
    """
    x = np.asarray(x, dtype=float)
    jet = ex.jet2(f, variables, x, params)
    y = jet.gradient
    inner = legendre_transform(f, variables, y, x, params)
    return float(np.dot(x, y) - inner.f_tilde)
