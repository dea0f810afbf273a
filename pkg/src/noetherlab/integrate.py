"""Trajectory generation for Euler-Lagrange / Hamilton equations.

Fixed-step RK4 for either formulation and Stormer-Verlet (kick-drift-kick)
for separable Hamiltonians H = 1/2 p^T M^{-1} p + V(q) with a constant
metric.  Trajectories are stored canonically in phase space; the velocity
view is derived on demand.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import expr as ex
from .systems import (DegenerateMetricError, LagrangianSystem, PhaseState,
                      VelocityState, to_momenta, to_velocities)

__all__ = [
    "Trajectory",
    "IntegratorSpec",
    "el_rhs",
    "hamilton_rhs",
    "run",
    "radius_guard",
    "trajectory_to_csv",
]

_STEP_ERRORS = (ZeroDivisionError, ValueError, OverflowError, FloatingPointError)


@dataclass(frozen=True)
class IntegratorSpec:
    method: str = "rk4"            # 'rk4' or 'verlet'
    dt: float = 1e-3
    steps: int = 1000
    guard: Callable | None = None  # guard(q, p) -> True stops the run
    store_every: int = 1           # thin the stored samples (all steps computed)

    def __post_init__(self):
        if self.method not in ("rk4", "verlet"):
            raise ValueError(f"unknown method {self.method!r}")
        if not (self.dt > 0 and np.isfinite(self.dt * self.steps)):
            raise ValueError("dt must be positive and dt*steps finite")
        if self.steps < 1 or self.store_every < 1:
            raise ValueError("steps and store_every must be positive")


@dataclass
class Trajectory:
    t: np.ndarray
    q: np.ndarray                  # (m, n)
    p: np.ndarray                  # (m, n)
    meta: dict = field(default_factory=dict)
    truncated: bool = False
    reason: str = ""

    def __len__(self):
        return len(self.t)

    def state(self, k: int) -> PhaseState:
        return PhaseState(self.q[k], self.p[k])

    def velocities(self, sys: LagrangianSystem) -> np.ndarray:
        """qdot samples derived from the stored momenta."""
        if sys.has_constant_metric:
            ginv = np.linalg.inv(sys.metric)
            return self.p @ ginv.T
        return np.array([to_velocities(sys, self.state(k)).qdot
                         for k in range(len(self))])

    def energies(self, sys: LagrangianSystem) -> np.ndarray:
        if sys.has_constant_metric:
            ginv = np.linalg.inv(sys.metric)
            kin = 0.5 * np.einsum("ki,ij,kj->k", self.p, ginv, self.p)
            pot = np.array([sys.potential_at(qk) for qk in self.q])
            return kin + pot
        from .systems import hamiltonian
        return np.array([hamiltonian(sys, self.state(k)) for k in range(len(self))])

    def radii(self) -> np.ndarray:
        return np.linalg.norm(self.q, axis=1)


def radius_guard(r_min: float) -> Callable:
    """Stop predicate |q| < r_min for potentials singular at the origin."""
    def guard(q, p):
        return float(np.linalg.norm(q)) < r_min
    guard.r_min = r_min
    return guard


# ---------------------------------------------------------------------------
# Right-hand sides (single-state reference implementations)
# ---------------------------------------------------------------------------

def el_rhs(sys: LagrangianSystem, s: VelocityState) -> np.ndarray:
    """Acceleration of the Euler-Lagrange equations for metric systems:
    qddot^l = -Gamma^l_jk qdot^j qdot^k - (g^{-1} grad V)^l.
    """
    if not sys.is_metric:
        raise ValueError("el_rhs needs a metric system; use hamilton_rhs")
    from .systems import christoffel
    q, qd = s.q, s.qdot
    g = sys.metric_at(q)
    acc = -np.linalg.solve(g, sys.potential_grad(q))
    if sys.has_expr_metric:
        gamma = christoffel(sys, q)
        acc = acc - np.einsum("ljk,j,k->l", gamma, qd, qd)
    return acc


def hamilton_rhs(sys: LagrangianSystem, s: PhaseState) -> tuple[np.ndarray, np.ndarray]:
    """(qdot, pdot) of Hamilton's equations.

    Uses the Legendre identities dH/dp = qdot and dH/dq = -dL/dq, so only
    exact jets of L appear; no finite differences.
    """
    v = to_velocities(sys, s)
    qdot = v.qdot
    jet_q = sys.lagrangian_jet_q(s.q, qdot)
    return qdot, jet_q.gradient


# ---------------------------------------------------------------------------
# Fast compiled stepping
# ---------------------------------------------------------------------------

class _ConstMetricLoop:
    """Plain-float inner loops for systems with a constant metric."""

    def __init__(self, sys: LagrangianSystem):
        self.n = sys.n
        g = np.asarray(sys.metric, dtype=float)
        if abs(np.linalg.det(g)) < 1e-300:
            raise DegenerateMetricError("constant metric is singular")
        self.g_rows = tuple(tuple(row) for row in g)
        self.ginv_rows = tuple(tuple(row) for row in np.linalg.inv(g))
        if sys.potential is not None:
            self.grad_v = ex.compile_value_grad(sys.potential, sys.coords, sys.params)
        else:
            zeros = (0.0,) * self.n
            self.grad_v = lambda q: (0.0, zeros)

    def matvec(self, rows, x):
        n = self.n
        return [sum(rows[i][j] * x[j] for j in range(n)) for i in range(n)]

    def rk4_hamilton(self, q, p, dt):
        gv = self.grad_v
        mv = self.matvec
        gr = self.ginv_rows
        n = range(self.n)
        h2, h6 = dt * 0.5, dt / 6.0
        dq1 = mv(gr, p)
        dp1 = [-gi for gi in gv(q)[1]]
        q2 = [q[i] + h2 * dq1[i] for i in n]
        p2 = [p[i] + h2 * dp1[i] for i in n]
        dq2 = mv(gr, p2)
        dp2 = [-gi for gi in gv(q2)[1]]
        q3 = [q[i] + h2 * dq2[i] for i in n]
        p3 = [p[i] + h2 * dp2[i] for i in n]
        dq3 = mv(gr, p3)
        dp3 = [-gi for gi in gv(q3)[1]]
        q4 = [q[i] + dt * dq3[i] for i in n]
        p4 = [p[i] + dt * dp3[i] for i in n]
        dq4 = mv(gr, p4)
        dp4 = [-gi for gi in gv(q4)[1]]
        qn = [q[i] + h6 * (dq1[i] + 2.0 * (dq2[i] + dq3[i]) + dq4[i]) for i in n]
        pn = [p[i] + h6 * (dp1[i] + 2.0 * (dp2[i] + dp3[i]) + dp4[i]) for i in n]
        return qn, pn

    def rk4_el(self, q, qd, dt):
        # constant metric: qddot = -Ginv grad V
        gv = self.grad_v
        mv = self.matvec
        gr = self.ginv_rows
        n = range(self.n)
        h2, h6 = dt * 0.5, dt / 6.0

        def acc(qq):
            return [-a for a in mv(gr, gv(qq)[1])]

        a1 = acc(q)
        q2 = [q[i] + h2 * qd[i] for i in n]
        v2 = [qd[i] + h2 * a1[i] for i in n]
        a2 = acc(q2)
        q3 = [q[i] + h2 * v2[i] for i in n]
        v3 = [qd[i] + h2 * a2[i] for i in n]
        a3 = acc(q3)
        q4 = [q[i] + dt * v3[i] for i in n]
        v4 = [qd[i] + dt * a3[i] for i in n]
        a4 = acc(q4)
        qn = [q[i] + h6 * (qd[i] + 2.0 * (v2[i] + v3[i]) + v4[i]) for i in n]
        vn = [qd[i] + h6 * (a1[i] + 2.0 * (a2[i] + a3[i]) + a4[i]) for i in n]
        return qn, vn

    def verlet(self, q, p, dt, grad_at_q):
        """One kick-drift-kick step; returns (q', p', grad V(q'))."""
        mv = self.matvec
        n = range(self.n)
        h2 = dt * 0.5
        ph = [p[i] - h2 * grad_at_q[i] for i in n]
        dq = mv(self.ginv_rows, ph)
        qn = [q[i] + dt * dq[i] for i in n]
        gn = self.grad_v(qn)[1]
        pn = [ph[i] - h2 * gn[i] for i in n]
        return qn, pn, gn


class _ExprMetricLoop:
    """Inner loop for position-dependent metrics.

    Evaluates metric entries and their gradients through the compiled
    forward-mode functions in one pass per stage; the equations are the
    same exact-jet identities the public rhs operations use.
    """

    def __init__(self, sys: LagrangianSystem):
        self.sys = sys
        self.n = sys.n
        fns = sys._metric_fns
        n = self.n
        # flattened upper triangle (i <= j) of compiled (value, grad) entries
        self.entries = [(i, j, fns[i, j]) for i in range(n) for j in range(i, n)]
        if sys.potential is not None:
            self.grad_v = ex.compile_value_grad(sys.potential, sys.coords, sys.params)
        else:
            zeros = (0.0,) * n
            self.grad_v = lambda q: (0.0, zeros)

    def _geometry(self, q):
        """g, dg[k][i][j] at q from one compiled pass over the entries."""
        n = self.n
        g = np.empty((n, n))
        dg = np.zeros((n, n, n))
        for i, j, fn in self.entries:
            val, grad = fn(q)
            g[i, j] = g[j, i] = val
            for k in range(n):
                dg[k, i, j] = dg[k, j, i] = grad[k]
        return g, dg

    @staticmethod
    def _solve(g, b):
        if g.shape[0] == 2:
            det = g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
            return np.array([(g[1, 1] * b[0] - g[0, 1] * b[1]) / det,
                             (g[0, 0] * b[1] - g[1, 0] * b[0]) / det])
        return np.linalg.solve(g, b)

    def _rhs(self, q, p):
        g, dg = self._geometry(q)
        qd = self._solve(g, p)
        # dL/dq_k = 1/2 qd^T (d_k g) qd - d_k V  (Legendre identity)
        pdot = 0.5 * (dg @ qd) @ qd - np.asarray(self.grad_v(q)[1])
        return qd, pdot

    def _acc(self, q, qd):
        # g qddot = -[d_j g_lk - 1/2 d_l g_jk] qd^j qd^k - dV
        g, dg = self._geometry(q)
        bracket = (dg.transpose(1, 0, 2) - 0.5 * dg) @ qd @ qd
        return self._solve(g, -bracket - np.asarray(self.grad_v(q)[1]))

    def rk4_hamilton(self, q, p, dt):
        q = np.asarray(q)
        p = np.asarray(p)
        h2 = 0.5 * dt
        dq1, dp1 = self._rhs(q, p)
        dq2, dp2 = self._rhs(q + h2 * dq1, p + h2 * dp1)
        dq3, dp3 = self._rhs(q + h2 * dq2, p + h2 * dp2)
        dq4, dp4 = self._rhs(q + dt * dq3, p + dt * dp3)
        qn = q + dt / 6.0 * (dq1 + 2.0 * (dq2 + dq3) + dq4)
        pn = p + dt / 6.0 * (dp1 + 2.0 * (dp2 + dp3) + dp4)
        return list(qn), list(pn)

    def rk4_el(self, q, qd, dt):
        q = np.asarray(q)
        qd = np.asarray(qd)
        h2 = 0.5 * dt
        a1 = self._acc(q, qd)
        v2 = qd + h2 * a1
        a2 = self._acc(q + h2 * qd, v2)
        v3 = qd + h2 * a2
        a3 = self._acc(q + h2 * v2, v3)
        v4 = qd + dt * a3
        a4 = self._acc(q + dt * v3, v4)
        qn = q + dt / 6.0 * (qd + 2.0 * (v2 + v3) + v4)
        vn = qd + dt / 6.0 * (a1 + 2.0 * (a2 + a3) + a4)
        return list(qn), list(vn)


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------

def run(sys: LagrangianSystem, s0, spec: IntegratorSpec,
        formulation: str = "hamilton") -> Trajectory:
    """Integrate from ``s0`` (PhaseState or VelocityState).

    ``formulation`` selects the integrated equations: 'hamilton' steps
    (q, p), 'euler-lagrange' steps (q, qdot) through el_rhs.  Storage is in
    phase space either way.  The run stops early (flagged, not raised) when
    the guard trips or a state turns non-finite.
    """
    if formulation not in ("hamilton", "euler-lagrange"):
        raise ValueError(f"unknown formulation {formulation!r}")
    if spec.method == "verlet":
        if not sys.has_constant_metric:
            raise ValueError("verlet requires a constant metric (separable H)")
        if formulation != "hamilton":
            raise ValueError("verlet integrates the Hamiltonian formulation")

    if isinstance(s0, VelocityState):
        phase0 = to_momenta(sys, s0)
        vel0 = s0
    else:
        phase0 = s0
        vel0 = None
    sys.check_admissible(phase0.q)

    el = formulation == "euler-lagrange"
    if el and vel0 is None:
        vel0 = to_velocities(sys, phase0)

    loop = _ConstMetricLoop(sys) if sys.has_constant_metric else _ExprMetricLoop(sys)

    n = sys.n
    max_stored = spec.steps // spec.store_every + 2
    ts = np.empty(max_stored)
    qs = np.empty((max_stored, n))
    ps = np.empty((max_stored, n))

    q = list(map(float, phase0.q))
    p = list(map(float, phase0.p))
    w = list(map(float, vel0.qdot)) if el else None

    if sys.has_constant_metric:
        g_rows = loop.g_rows

        def momenta_of(qq, ww):
            return [sum(g_rows[i][j] * ww[j] for j in range(n)) for i in range(n)]
    else:
        def momenta_of(qq, ww):
            return list(to_momenta(sys, VelocityState(qq, ww)).p)

    stored = 0

    def store(k, qq, pp):
        nonlocal stored
        ts[stored] = k * spec.dt
        qs[stored] = qq
        ps[stored] = pp
        stored += 1

    store(0, q, p)
    truncated = False
    reason = ""
    verlet_grad = loop.grad_v(q)[1] if spec.method == "verlet" else None

    for k in range(1, spec.steps + 1):
        try:
            if spec.method == "verlet":
                q, p, verlet_grad = loop.verlet(q, p, spec.dt, verlet_grad)
            elif el:
                q, w = loop.rk4_el(q, w, spec.dt)
                p = momenta_of(q, w)
            else:
                q, p = loop.rk4_hamilton(q, p, spec.dt)
        except _STEP_ERRORS as err:
            truncated, reason = True, f"step error: {err}"
            break
        if not all(map(np.isfinite, q)) or not all(map(np.isfinite, p)):
            truncated, reason = True, "state became non-finite"
            break
        if sys.admissible is not None and not sys.admissible(np.asarray(q)):
            store(k, q, p)
            truncated, reason = True, "state left the admissible set"
            break
        if spec.guard is not None and spec.guard(np.asarray(q), np.asarray(p)):
            store(k, q, p)
            truncated, reason = True, "guard tripped"
            break
        if k % spec.store_every == 0 or k == spec.steps:
            store(k, q, p)

    meta = {
        "integrator": spec.method,
        "formulation": formulation,
        "dt": spec.dt,
        "steps": spec.steps,
        "store_every": spec.store_every,
        "system": repr(sys),
    }
    return Trajectory(ts[:stored].copy(), qs[:stored].copy(), ps[:stored].copy(),
                      meta=meta, truncated=truncated, reason=reason)


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.17g}"


def trajectory_to_csv(sys: LagrangianSystem, traj: Trajectory) -> str:
    """Delimited dump: t,q1..qn,p1..pn,E with 17 significant digits."""
    n = sys.n
    buf = io.StringIO()
    cols = ["t"] + [f"q{i+1}" for i in range(n)] + [f"p{i+1}" for i in range(n)] + ["E"]
    buf.write(",".join(cols) + "\n")
    energies = traj.energies(sys)
    for k in range(len(traj)):
        row = [traj.t[k], *traj.q[k], *traj.p[k], energies[k]]
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()
