"""Noether charges, Killing-field verification, and drift audits.

The charge attached to a symmetry field X is f = sum X^i(q) dL/dqdot^i,
evaluated with exact jets; for metric Lagrangians this equals g(qdot, X).
Killing verdicts use finite differences of the metric (h = 1e-5) because
metrics may be builtin constants without expression trees, while X and V
are differentiated exactly.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import expr as ex
from .integrate import Trajectory
from .systems import LagrangianSystem, VelocityState

__all__ = [
    "SymmetryField",
    "KillingReport",
    "DriftReport",
    "Monitor",
    "noether_charge",
    "killing_residual",
    "audit",
    "energy_monitor",
    "momentum_monitors",
    "angular_momentum_monitors",
    "runge_lenz_monitors",
    "kepler_monitors",
    "audit_to_csv",
]

_FD_H = 1e-5
KILLING_TOL = 1e-7


@dataclass(frozen=True)
class SymmetryField:
    """Vector field X = sum X^i d/dq^i with expression components."""

    components: tuple[ex.Expr, ...]
    label: str = ""

    @classmethod
    def parse(cls, sources: Sequence[str], coords: Sequence[str],
              params: Sequence[str] = (), label: str = "") -> "SymmetryField":
        comps = tuple(ex.parse_expression(s, coords, params) for s in sources)
        return cls(comps, label or ";".join(sources))

    def at(self, coords: Sequence[str], q: np.ndarray,
           params: dict | None = None) -> np.ndarray:
        binding = dict(params or {})
        binding.update(zip(coords, q))
        return np.array([ex.evaluate(c, binding) for c in self.components])

    def jacobian(self, coords: Sequence[str], q: np.ndarray,
                 params: dict | None = None) -> np.ndarray:
        """J[i, j] = d X^i / d q^j, exact."""
        return np.array([ex.jet2(c, coords, q, params).gradient
                         for c in self.components])


def noether_charge(sys: LagrangianSystem, X: SymmetryField, s: VelocityState) -> float:
    """f(v) = dL X^ver = sum X^i(q) dL/dqdot^i at the state."""
    sys.check_admissible(s.q)
    jet = sys.lagrangian_jet_qdot(s.q, s.qdot)
    xv = X.at(sys.coords, s.q, sys.params)
    return float(np.dot(xv, jet.gradient))


@dataclass(frozen=True)
class KillingReport:
    metric_residual: float     # max_sample |(L_X g)_jk|_inf
    potential_residual: float  # max_sample |X(V)|
    is_killing: bool
    preserves_potential: bool


def killing_residual(sys: LagrangianSystem, X: SymmetryField,
                     sample_points: Sequence[np.ndarray],
                     tol: float = KILLING_TOL) -> KillingReport:
    """Verify the infinitesimal-symmetry hypotheses L_X g = 0 and X(V) = 0.

    (L_X g)_jk = X^i d_i g_jk + g_ik d_j X^i + g_ji d_k X^i with the metric
    derivative from central differences and dX from exact jets.  Only the
    infinitesimal conditions are certified, not flow-level invariance.
    """
    n = sys.n
    g_res = 0.0
    v_res = 0.0
    for q in sample_points:
        q = np.asarray(q, dtype=float)
        xv = X.at(sys.coords, q, sys.params)
        jac = X.jacobian(sys.coords, q, sys.params)
        g = sys.metric_at(q)
        dg = np.zeros((n, n, n))
        for i in range(n):
            e = np.zeros(n)
            e[i] = _FD_H
            dg[i] = (sys.metric_at(q + e) - sys.metric_at(q - e)) / (2 * _FD_H)
        lie = (np.einsum("i,ijk->jk", xv, dg)
               + np.einsum("ij,ik->jk", jac, g)
               + np.einsum("ik,ij->jk", jac, g))
        g_res = max(g_res, float(np.max(np.abs(lie))))
        if sys.potential is not None:
            v_res = max(v_res, abs(float(np.dot(xv, sys.potential_grad(q)))))
    return KillingReport(g_res, v_res, g_res <= tol, v_res <= tol)


# ---------------------------------------------------------------------------
# Drift audits along trajectories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Monitor:
    label: str
    fn: Callable  # fn(t, q, p) -> float


@dataclass(frozen=True)
class DriftReport:
    label: str
    initial: float
    max_drift: float
    t_at_max: float
    relative_drift: float
    valid: bool = True
    error: str = ""


def audit(traj: Trajectory, monitors: Sequence[Monitor]) -> list[DriftReport]:
    """One drift report per monitor; failures mark the report invalid."""
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    reports = []
    for mon in monitors:
        try:
            values = np.array([mon.fn(traj.t[k], traj.q[k], traj.p[k])
                               for k in range(len(traj))], dtype=float)
            drift = np.abs(values - values[0])
            k_max = int(np.argmax(drift))
            rel = float(drift[k_max]) / max(abs(float(values[0])), 1.0)
            reports.append(DriftReport(mon.label, float(values[0]),
                                       float(drift[k_max]), float(traj.t[k_max]),
                                       rel))
        except Exception as err:  # noqa: BLE001 - keep auditing the rest
            reports.append(DriftReport(mon.label, np.nan, np.nan, np.nan,
                                       np.nan, valid=False, error=str(err)))
    return reports


def energy_monitor(sys: LagrangianSystem) -> Monitor:
    if sys.has_constant_metric:
        ginv = np.linalg.inv(sys.metric)

        def fn(t, q, p):
            return 0.5 * float(p @ ginv @ p) + sys.potential_at(q)
    else:
        from .systems import PhaseState, hamiltonian

        def fn(t, q, p):
            return hamiltonian(sys, PhaseState(q, p))
    return Monitor("energy", fn)


def momentum_monitors(sys: LagrangianSystem) -> list[Monitor]:
    def make(i):
        return Monitor(f"p{i+1}", lambda t, q, p: float(p[i]))
    return [make(i) for i in range(sys.n)]


def angular_momentum_monitors(sys: LagrangianSystem) -> list[Monitor]:
    """L = q x p, for 3-dimensional systems in Cartesian coordinates."""
    if sys.n != 3:
        raise ValueError("angular momentum monitors need n = 3")

    def make(i):
        return Monitor(f"L{i+1}", lambda t, q, p: float(np.cross(q, p)[i]))
    return [make(i) for i in range(3)]


def runge_lenz_monitors(sys: LagrangianSystem, M: float) -> list[Monitor]:
    """Runge-Lenz components v x (q x v) - M q/|q| for unit-mass Kepler."""
    if sys.n != 3:
        raise ValueError("Runge-Lenz monitors need n = 3")

    def make(i):
        def fn(t, q, p):
            v = p  # unit mass, Euclidean metric
            rl = np.cross(v, np.cross(q, v)) - M * q / np.linalg.norm(q)
            return float(rl[i])
        return Monitor(f"RungeLenz{i+1}", fn)
    return [make(i) for i in range(3)]


def kepler_monitors(sys: LagrangianSystem, M: float) -> list[Monitor]:
    """Energy, momenta, angular momentum, Runge-Lenz: the full Kepler audit."""
    return ([energy_monitor(sys)] + momentum_monitors(sys)
            + angular_momentum_monitors(sys) + runge_lenz_monitors(sys, M))


def audit_to_csv(reports: Sequence[DriftReport]) -> str:
    buf = io.StringIO()
    buf.write("charge,initial,max_drift,t_at_max,relative_drift\n")
    for r in reports:
        buf.write(f"{r.label},{r.initial:.17g},{r.max_drift:.17g},"
                  f"{r.t_at_max:.17g},{r.relative_drift:.17g}\n")
    return buf.getvalue()
