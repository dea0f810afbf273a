"""End-to-end acceptance runs, one test per criterion.

Each criterion is exercised at its stated tolerance; the conftest hook
prints one PASS/FAIL line per criterion at the end of the session.
"""

import math
import time

import numpy as np
from numpy.testing import assert_allclose

from noetherlab import conserve, expr as ex, fields, hamjac, radial
from noetherlab.integrate import IntegratorSpec, radius_guard, run
from noetherlab.modes import classify_hessian, normal_modes, quadratic_approx
from noetherlab.systems import (LagrangianSystem, PhaseState,
                                legendre_double, to_velocities)

V_NEWTON = radial.newton_potential()


def kepler(n=3, M=1.0):
    coords = ["x", "y", "z"][:n]
    rsq = " + ".join(f"{c}^2" for c in coords)
    return LagrangianSystem.euclidean(coords, f"-M/sqrt({rsq})", params={"M": M})


def ellipse_orbit(M, L, E, dt, periods=1.05):
    el = radial.kepler_elements(M, L, E)
    sys = kepler(2, M)
    s0 = PhaseState([el.r_per, 0.0], [0.0, L / el.r_per])
    steps = int(math.ceil(periods * el.T / dt))
    return el, sys, run(sys, s0, IntegratorSpec("rk4", dt, steps))


def test_criterion_01_kepler_circular_orbit():
    start = time.perf_counter()
    sys = kepler()
    traj = run(sys, PhaseState([1, 0, 0], [0, 1, 0]),
               IntegratorSpec("rk4", 1e-3, int(math.ceil(2 * math.pi / 1e-3))))
    assert np.max(np.abs(traj.radii() - 1.0)) <= 1e-7
    assert time.perf_counter() - start < 1.0


def test_criterion_02_kepler_first_law():
    start = time.perf_counter()
    el, _, traj = ellipse_orbit(1.0, 1.0, -0.25, dt=5e-4)
    r = traj.radii()
    assert abs(r.min() - (2 - math.sqrt(2))) <= 1e-6
    assert abs(r.max() - (2 + math.sqrt(2))) <= 1e-6
    # fit r(phi) = p/(1 + eps cos phi) with p = 1: linear least squares in eps
    phi = np.unwrap(np.arctan2(traj.q[:, 1], traj.q[:, 0]))
    p = 1.0
    cos_phi = np.cos(phi)
    eps_hat = float(np.sum(cos_phi * (p / r - 1.0)) / np.sum(cos_phi**2))
    residual = np.max(np.abs(r - p / (1.0 + eps_hat * cos_phi)))
    assert residual <= 1e-5
    assert abs(eps_hat - el.eccentricity) <= 1e-6
    assert time.perf_counter() - start < 5.0


def test_criterion_03_kepler_second_law():
    start = time.perf_counter()
    L = 1.0
    _, _, traj = ellipse_orbit(1.0, L, -0.25, dt=5e-4)
    area = radial.swept_area(traj)
    rng = np.random.default_rng(2024)
    for _ in range(10):
        i, j = np.sort(rng.integers(0, len(traj.t), size=2))
        expected = 0.5 * L * (traj.t[j] - traj.t[i])
        assert abs(area.between(traj.t[i], traj.t[j]) - expected) <= 1e-6
    assert time.perf_counter() - start < 5.0


def test_criterion_04_kepler_third_law():
    start = time.perf_counter()
    M = 1.0
    for a in (1.0, 2.0, 4.0):
        E = -M / (2 * a)
        L = math.sqrt(a * (1 - 0.5**2) * M)  # eccentricity 1/2
        el = radial.kepler_elements(M, L, E)
        assert_allclose(el.a, a, rtol=1e-12)
        T_expected = 2 * math.pi * a**1.5 / math.sqrt(M)
        dt = T_expected / 1e5
        _, _, traj = ellipse_orbit(M, L, E, dt=dt, periods=2.2)
        T_measured = radial.measure_period(traj)
        assert abs(T_measured - T_expected) / T_expected <= 1e-4
    assert time.perf_counter() - start < 30.0


def test_criterion_05_free_fall_time():
    start = time.perf_counter()
    # quadrature: t = (pi/2) r0^{3/2} / sqrt(2M) = pi for r0 = 2, M = 1
    t_quad = radial.t_of_r(V_NEWTON, 0.0, -0.5, 0.0, 2.0, {"M": 1.0})
    assert abs(t_quad - math.pi) / math.pi <= 1e-6
    # direct guarded integration, analytic remainder below the guard radius
    sys = kepler()
    traj = run(sys, PhaseState([2, 0, 0], [0, 0, 0]),
               IntegratorSpec("rk4", 1e-4, 40000, guard=radius_guard(1e-3)))
    assert traj.truncated
    r_end = traj.radii()[-1]
    remainder = radial.t_of_r(V_NEWTON, 0.0, -0.5, 0.0, r_end, {"M": 1.0})
    t_direct = traj.t[-1] + remainder
    assert abs(t_direct - math.pi) / math.pi <= 1e-3
    assert time.perf_counter() - start < 2.0


def test_criterion_06_coupled_pendula_modes():
    start = time.perf_counter()
    for k in (0.25, 0.5, 1.0):
        sys = LagrangianSystem.euclidean(
            ["q1", "q2"], "0.5*q1^2 + 0.5*q2^2 + 0.5*kk*(q1 - q2)^2",
            params={"kk": k})
        alpha, omega = quadratic_approx(sys, [0.0, 0.0])
        ms = normal_modes(alpha, omega)
        assert_allclose(ms.frequencies, [1.0, math.sqrt(1 + 2 * k)], rtol=1e-10)
        for col, shape in ((0, [1.0, 1.0]), (1, [1.0, -1.0])):
            target = np.array(shape) / math.sqrt(2)
            xi = ms.eigenvectors[:, col]
            assert min(np.linalg.norm(xi - target),
                       np.linalg.norm(xi + target)) <= 1e-10
    assert time.perf_counter() - start < 1.0


def test_criterion_07_legendre_involution():
    start = time.perf_counter()
    rng = np.random.default_rng(77)
    for _ in range(50):
        n = int(rng.integers(1, 4))
        a = rng.normal(size=(n, n))
        spd = a @ a.T + (1.0 + rng.uniform()) * np.eye(n)
        names = [f"x{i}" for i in range(n)]
        terms = [f"({float(0.5 * spd[i, j])!r})*{names[i]}*{names[j]}"
                 for i in range(n) for j in range(n)]
        f = ex.parse_expression(" + ".join(terms), names)
        for _ in range(10):
            x = rng.normal(size=n)
            expected = 0.5 * x @ spd @ x
            assert abs(legendre_double(f, names, x) - expected) <= 1e-9
    assert time.perf_counter() - start < 1.0


def test_criterion_08_hamilton_lagrange_equivalence():
    start = time.perf_counter()
    rng = np.random.default_rng(88)
    systems = []
    for _ in range(8):  # constant random SPD metrics with smooth potentials
        n = int(rng.integers(1, 4))
        a = rng.normal(size=(n, n))
        spd = a @ a.T + (1.0 + rng.uniform()) * np.eye(n)
        coords = ["x", "y", "z"][:n]
        c1, c2 = rng.uniform(0.2, 1.0, size=2)
        pot = " + ".join(f"{float(c1)!r}*{c}^2" for c in coords)
        pot += f" + {float(c2)!r}*sin({coords[0]})"
        systems.append(LagrangianSystem.from_metric(coords, spd.tolist(), pot))
    for _ in range(2):  # position-dependent metrics (polar-type)
        c3 = float(rng.uniform(0.5, 1.5))
        systems.append(LagrangianSystem.from_metric(
            ["rad", "ang"], [["1", "0"], ["0", f"{c3!r}*rad^2"]],
            "0.5*(rad - 1.5)^2"))
    for sys in systems:
        q0 = rng.uniform(0.8, 1.2, size=sys.n)
        p0 = rng.normal(size=sys.n) * 0.3
        s0 = PhaseState(q0, p0)
        spec = IntegratorSpec("rk4", 1e-4, 10000)
        th = run(sys, s0, spec)
        tl = run(sys, to_velocities(sys, s0), spec, formulation="euler-lagrange")
        assert not th.truncated and not tl.truncated
        assert np.max(np.abs(th.q - tl.q)) <= 1e-9
        assert np.max(np.abs(th.p - tl.p)) <= 1e-9
    assert time.perf_counter() - start < 10.0


def test_criterion_09_two_center():
    start = time.perf_counter()
    c, k = 1.0, 1.0
    rng = np.random.default_rng(99)
    # metric vs numeric Euclidean pullback at 200 random points
    h = 1e-5
    checked = 0
    while checked < 200:
        xi = rng.uniform(2.05, 8.0)
        eta = rng.uniform(-1.95, 1.95)
        quadrant = 1 if eta < 0 else 2
        try:
            def inv(a, b):
                return np.array(hamjac.elliptic_inverse(a, b, c, quadrant))
            d_xi = (inv(xi + h, eta) - inv(xi - h, eta)) / (2 * h)
            d_eta = (inv(xi, eta + h) - inv(xi, eta - h)) / (2 * h)
        except ValueError:
            continue
        gxx, gee = hamjac.elliptic_metric(xi, eta, c)
        assert abs(d_xi @ d_xi - gxx) <= 1e-8 * gxx
        assert abs(d_eta @ d_eta - gee) <= 1e-8 * gee
        checked += 1
    # Hamiltonian matches the Cartesian one through the phase map
    for _ in range(200):
        x = rng.uniform(0.2, 3.0)
        y = rng.uniform(0.2, 3.0) * rng.choice([-1, 1])
        px, py = rng.normal(size=2)
        state = hamjac.cartesian_to_elliptic_phase(x, y, px, py, c)
        r1 = math.hypot(x - c, y)
        r2 = math.hypot(x + c, y)
        h_cart = 0.5 * (px**2 + py**2) - k / r1 - k / r2
        assert abs(hamjac.two_center_hamiltonian(state, c, k) - h_cart) \
            <= 1e-10 * max(abs(h_cart), 1.0)
    # separation constants along an rk4 trajectory over unit time
    sys = hamjac.two_center_system(c, k)
    traj = run(sys, PhaseState([0.4, 1.1], [0.4, 0.1]),
               IntegratorSpec("rk4", 1e-4, 10000))
    ts, C, c1 = hamjac.separation_constants(traj, c, k)
    assert ts[-1] - ts[0] >= 1.0 - 1e-12
    assert np.std(C) <= 1e-6
    assert np.std(c1) <= 1e-6
    # the separated quadrature family solves the HJ equation on a grid
    fam = hamjac.two_center_family(c, k, xi_anchor=2.2)
    grid = [np.array([xi, eta]) for xi in np.linspace(2.3, 3.4, 7)
            for eta in np.linspace(-1.5, 1.5, 7)]
    rep = hamjac.hj_residual(
        lambda x, p: hamjac.two_center_hamiltonian([x[0], x[1], p[0], p[1]], c, k),
        fam, grid, [np.array([C[0], c1[0]])])
    assert rep.max_residual <= 1e-6
    assert time.perf_counter() - start < 30.0


def test_criterion_10_noether_suite():
    start = time.perf_counter()
    # rotations: angular momentum and Runge-Lenz along a Kepler ellipse
    el = radial.kepler_elements(1.0, 1.0, -0.25)
    sys = kepler()
    s0 = PhaseState([el.r_per, 0, 0], [0, 1.0 / el.r_per, 0])
    traj = run(sys, s0, IntegratorSpec("rk4", 1e-3, int(math.ceil(el.T / 1e-3))))
    reports = {r.label: r for r in conserve.audit(
        traj, conserve.angular_momentum_monitors(sys)
        + conserve.runge_lenz_monitors(sys, 1.0))}
    for i in (1, 2, 3):
        assert reports[f"L{i}"].max_drift <= 1e-8
        assert reports[f"RungeLenz{i}"].max_drift <= 1e-7
    rot = conserve.SymmetryField.parse(["-y", "x", "0"], ["x", "y", "z"])
    kr = conserve.killing_residual(sys, rot, [traj.q[i] for i in (0, 500, 1500)])
    assert kr.is_killing and kr.preserves_potential
    # translations: momentum along a trajectory of a z-independent potential
    sys_t = LagrangianSystem.euclidean(["x", "y", "z"], "0.5*(x^2 + y^2)")
    traj_t = run(sys_t, PhaseState([1.0, 0.0, 0.2], [0.0, 1.0, 0.3]),
                 IntegratorSpec("rk4", 1e-3, int(math.ceil(2 * math.pi / 1e-3))))
    rep_p = conserve.audit(traj_t, conserve.momentum_monitors(sys_t))
    assert rep_p[2].max_drift <= 1e-8  # p_z conserved
    trans = conserve.SymmetryField.parse(["0", "0", "1"], ["x", "y", "z"])
    kt = conserve.killing_residual(sys_t, trans, [traj_t.q[i] for i in (0, 99)])
    assert kt.is_killing and kt.preserves_potential
    assert time.perf_counter() - start < 10.0


def test_criterion_11_field_lab():
    start = time.perf_counter()
    lat = fields.Lattice1D(256, 0.1)
    m, dt = 1.0, 1e-3
    k1 = 2 * math.pi / (lat.n * lat.dx)
    f = fields.ScalarField(lat, 0.3 * np.cos(k1 * lat.x),
                           0.2 * np.sin(k1 * lat.x))
    e0 = fields.kg_energy(f, m)
    p0 = fields.kg_momentum(f)
    worst_e = worst_p = 0.0
    g = f
    for i in range(10000):
        g = fields.kg_step(g, m, dt)
        if i % 50 == 49:
            worst_e = max(worst_e, abs(fields.kg_energy(g, m) - e0))
            worst_p = max(worst_p, abs(fields.kg_momentum(g) - p0))
    assert worst_e / e0 <= 1e-6
    assert worst_p / max(abs(p0), 1.0) <= 1e-8
    # discrete dispersion matched to 1e-6
    measured = fields.mode_frequency(lat, m, 1, dt=1e-3)
    discrete = math.sqrt(m**2 + (4 / lat.dx**2) * math.sin(k1 * lat.dx / 2)**2)
    assert abs(measured - discrete) <= 1e-6
    # divergence-shift invariance of the Euler-Lagrange residual
    snaps = [np.sin(2 * k1 * (lat.x - j * 0.02)) for j in (-2, -1, 0, 1, 2)]
    base = fields.el_residual("0.5*u_t^2 - 0.5*u_x^2", snaps, lat.dx, 0.02)
    shifted = fields.el_residual("0.5*u_t^2 - 0.5*u_x^2 + 2*u*u_t",
                                 snaps, lat.dx, 0.02)
    assert np.max(np.abs(shifted - base)) <= 1e-10
    # Yee Maxwell: 16^3, 1e3 steps
    g3 = fields.plane_wave_grid(16, 1.0, amplitude=0.1)
    em0 = fields.em_energy(g3)
    worst_div = worst_em = 0.0
    for i in range(1000):
        g3 = fields.maxwell_step(g3, 0.01)
        if i % 20 == 19:
            de, db = fields.em_divergence(g3)
            worst_div = max(worst_div, de, db)
            worst_em = max(worst_em, abs(fields.em_energy(g3) - em0))
    assert worst_div <= 1e-12
    assert worst_em / em0 <= 1e-6
    assert time.perf_counter() - start < 60.0


def test_criterion_12_property_suites():
    # compact re-assertion; the full invariants run in the module suites
    start = time.perf_counter()
    # exprcore: autodiff vs finite differences
    e = ex.parse_expression("exp(-0.5*x^2)*sin(y) + x/y", ["x", "y"])
    rng = np.random.default_rng(12)
    for _ in range(100):
        pt = rng.uniform(0.4, 1.8, size=2)
        jet = ex.jet2(e, ["x", "y"], pt)
        h = 1e-5
        for i in range(2):
            step = np.zeros(2)
            step[i] = h
            fd = (ex.evaluate(e, dict(zip("xy", pt + step)))
                  - ex.evaluate(e, dict(zip("xy", pt - step)))) / (2 * h)
            assert abs(jet.gradient[i] - fd) <= 1e-6 * max(abs(fd), 1.0)
    # integrator order checks
    ho = LagrangianSystem.euclidean(["x"], "0.5*x^2")

    def end_error(method, dt):
        steps = int(round(2 * math.pi / dt))
        traj = run(ho, PhaseState([1.0], [0.0]), IntegratorSpec(method, dt, steps))
        tf = traj.t[-1]
        return math.hypot(traj.q[-1, 0] - math.cos(tf),
                          traj.p[-1, 0] + math.sin(tf))

    assert end_error("rk4", 2e-2) / end_error("rk4", 1e-2) >= 12.0
    assert end_error("verlet", 2e-2) / end_error("verlet", 1e-2) >= 3.5
    # classification table on the six-case potential zoo
    zoo = [("0.5*(x^2 + y^2)", "stable"), ("-0.5*(x^2 + y^2)", "unstable"),
           ("x^2 - y^2", "saddle"), ("x^2 + 0*y", "degenerate"),
           ("x^4 + y^4", "degenerate"), ("-x^2 - 3*y^2", "unstable")]
    for pot, want in zoo:
        sys = LagrangianSystem.euclidean(["x", "y"], pot)
        _, omega = quadratic_approx(sys, [0.0, 0.0])
        assert classify_hessian(omega) == want
    assert time.perf_counter() - start < 30.0
