import numpy as np
import pytest
from numpy.testing import assert_allclose

from noetherlab import expr as ex
from noetherlab.systems import (LagrangianSystem, PhaseState, VelocityState,
                                christoffel, energy, hamiltonian,
                                lagrangian_value, legendre_double,
                                legendre_transform, nondegeneracy_report,
                                to_momenta, to_velocities)


def euclidean(coords, potential, mass=1.0, params=None):
    return LagrangianSystem.euclidean(coords, potential, mass=mass, params=params)


@pytest.fixture
def kepler():
    return euclidean(["x", "y", "z"], "-M/sqrt(x^2+y^2+z^2)", params={"M": 1.0})


@pytest.fixture
def polar():
    return LagrangianSystem.from_metric(
        ["rad", "phi"], [["1", "0"], ["0", "rad^2"]], "0*rad")


@pytest.fixture
def oscillator():
    return euclidean(["x"], "0.5*k*x^2", params={"k": 1.0})


class TestChristoffel:
    def test_euclidean_all_zero(self, kepler):
        gamma = christoffel(kepler, np.array([0.7, -0.2, 1.1]))
        assert np.all(gamma == 0.0)

    def test_polar_plane_hand_values(self, polar):
        # oracle: Gamma^l_jk = 1/2 g^{li}(d_k g_ij + d_j g_ik - d_i g_jk)
        # applied by hand to diag(1, r^2): Gamma^r_pp = -r, Gamma^p_rp = 1/r
        gamma = christoffel(polar, np.array([2.0, 0.3]))
        assert_allclose(gamma[0, 1, 1], -2.0, atol=1e-12)
        assert_allclose(gamma[1, 0, 1], 0.5, atol=1e-12)
        assert_allclose(gamma[1, 1, 0], 0.5, atol=1e-12)
        mask = np.ones((2, 2, 2), dtype=bool)
        mask[0, 1, 1] = mask[1, 0, 1] = mask[1, 1, 0] = False
        assert np.all(np.abs(gamma[mask]) < 1e-12)

    def test_polar_against_finite_difference_metric(self, polar):
        q = np.array([1.7, -0.4])
        h = 1e-6
        n = 2
        dg = np.zeros((n, n, n))
        for i in range(n):
            e = np.zeros(n)
            e[i] = h
            dg[i] = (polar.metric_at(q + e) - polar.metric_at(q - e)) / (2 * h)
        ginv = np.linalg.inv(polar.metric_at(q))
        brackets = 0.5 * (np.transpose(dg, (1, 2, 0)) + np.transpose(dg, (1, 0, 2)) - dg)
        gamma_fd = np.einsum("li,ijk->ljk", ginv, brackets)
        assert_allclose(christoffel(polar, q), gamma_fd, atol=1e-8)

    def test_exponential_1d_metric(self):
        # Gamma = 1/2 g^{-1} dg = 1/2 e^{-2x} * 2 e^{2x} = 1
        sys = LagrangianSystem.from_metric(["x"], [["exp(2*x)"]], "0*x")
        assert_allclose(christoffel(sys, np.array([0.0]))[0, 0, 0], 1.0, atol=1e-12)

    def test_symmetry_in_lower_indices(self, polar):
        gamma = christoffel(polar, np.array([0.9, 2.0]))
        assert np.array_equal(gamma, np.transpose(gamma, (0, 2, 1)))

    def test_singular_metric_raises(self):
        sys = LagrangianSystem.from_metric(["x"], [["x"]], "0*x")
        from noetherlab.systems import DegenerateMetricError
        with pytest.raises(DegenerateMetricError):
            christoffel(sys, np.array([0.0]))


class TestEnergiesAndValues:
    def test_free_particle_value(self):
        free = euclidean(["x", "y"], "0*x")
        assert lagrangian_value(free, VelocityState([0, 0], [3, 4])) == 12.5

    def test_oscillator_value(self, oscillator):
        assert lagrangian_value(oscillator, VelocityState([1], [0])) == -0.5

    def test_kepler_value(self, kepler):
        assert lagrangian_value(kepler, VelocityState([1, 0, 0], [0, 1, 0])) == 1.5

    def test_oscillator_energy(self, oscillator):
        assert energy(oscillator, VelocityState([1], [1])) == 1.0

    def test_kepler_circular_energy_is_minimum(self, kepler):
        # E_min = -M^2/(2 L^2) = -1/2 at the circular state
        assert_allclose(energy(kepler, VelocityState([1, 0, 0], [0, 1, 0])), -0.5,
                        atol=1e-15)

    def test_free_particle_energy_equals_lagrangian(self):
        free = euclidean(["x", "y"], "0*x")
        s = VelocityState([0.2, 0.4], [1.2, -0.3])
        assert_allclose(energy(free, s), lagrangian_value(free, s), atol=1e-15)

    def test_energy_equals_metric_form(self, polar):
        rng = np.random.default_rng(5)
        for _ in range(50):
            q = np.array([rng.uniform(0.5, 3.0), rng.uniform(-3, 3)])
            qd = rng.normal(size=2)
            g = polar.metric_at(q)
            expected = 0.5 * qd @ g @ qd + 0.0
            assert abs(energy(polar, VelocityState(q, qd)) - expected) <= 1e-12


class TestLegendreCorrespondence:
    def test_momenta_euclidean_mass(self):
        sys = euclidean(["x", "y"], "0*x", mass=2.0)
        assert_allclose(to_momenta(sys, VelocityState([0, 0], [1, 0])).p, [2, 0])

    def test_momenta_polar(self, polar):
        s = to_momenta(polar, VelocityState([2.0, 0.0], [0.0, 1.0]))
        assert_allclose(s.p, [0.0, 4.0], atol=1e-14)

    def test_zero_velocity_zero_momentum(self, oscillator):
        assert_allclose(to_momenta(oscillator, VelocityState([1], [0])).p, [0])

    def test_round_trip_1000_random_states(self):
        # module invariants on 1000 random admissible states: the Legendre
        # round trip closes to 1e-12 and H(to_momenta(s)) = E(s) pointwise
        rng = np.random.default_rng(0)
        a = rng.normal(size=(3, 3))
        sys = LagrangianSystem.from_metric(["x", "y", "z"],
                                           (a @ a.T + 3 * np.eye(3)).tolist(),
                                           "0.1*(x^2+y^2+z^2)")
        worst_rt = worst_he = 0.0
        for _ in range(1000):
            v = VelocityState(rng.normal(size=3), rng.normal(size=3))
            phase = to_momenta(sys, v)
            back = to_velocities(sys, phase)
            worst_rt = max(worst_rt, float(np.max(np.abs(back.qdot - v.qdot))))
            worst_he = max(worst_he, abs(hamiltonian(sys, phase) - energy(sys, v)))
        assert worst_rt <= 1e-12
        assert worst_he <= 1e-12

    def test_hamiltonian_matches_energy_pointwise(self, polar):
        rng = np.random.default_rng(1)
        for _ in range(200):
            q = np.array([rng.uniform(0.5, 3.0), rng.uniform(-3, 3)])
            qd = rng.normal(size=2)
            v = VelocityState(q, qd)
            assert abs(hamiltonian(polar, to_momenta(polar, v)) - energy(polar, v)) <= 1e-12

    def test_hamiltonian_examples(self, kepler, polar):
        assert_allclose(hamiltonian(kepler, PhaseState([1, 0, 0], [0, 1, 0])), -0.5)
        assert_allclose(hamiltonian(polar, PhaseState([2, 0], [0, 4])), 2.0)
        free = euclidean(["x", "y"], "0*x", mass=2.0)
        assert_allclose(hamiltonian(free, PhaseState([0, 0], [2, 0])), 1.0)

    def test_generic_lagrangian_inversion(self):
        # non-metric system entered directly: Newton inversion path
        sys = LagrangianSystem.from_lagrangian(
            ["x"], "0.5*xdot^2 + 0.25*xdot^4 - 0.5*x^2")
        v = VelocityState([0.3], [0.8])
        back = to_velocities(sys, to_momenta(sys, v), qdot_guess=[0.5])
        assert_allclose(back.qdot, v.qdot, atol=1e-12)


class TestNondegeneracy:
    def test_metric_lagrangian_always_invertible(self, polar):
        rep = nondegeneracy_report(polar, VelocityState([1.5, 0.2], [0.3, -0.1]))
        assert rep.invertible
        assert_allclose(rep.hessian, polar.metric_at(np.array([1.5, 0.2])), atol=1e-12)

    def test_linear_lagrangian_degenerate(self):
        sys = LagrangianSystem.from_lagrangian(["x", "y"], "xdot + ydot")
        rep = nondegeneracy_report(sys, VelocityState([0, 0], [1, 1]))
        assert not rep.invertible
        assert rep.det == 0.0

    def test_hyperbolic_lagrangian_invertible_indefinite(self):
        sys = LagrangianSystem.from_lagrangian(["x", "y"], "xdot*ydot")
        rep = nondegeneracy_report(sys, VelocityState([0, 0], [1, 1]))
        assert rep.invertible
        assert_allclose(rep.det, -1.0, atol=1e-14)
        assert_allclose(rep.hessian, [[0, 1], [1, 0]], atol=1e-14)


class TestLegendreTransform:
    def test_self_dual_quadratic(self):
        f = ex.parse_expression("0.5*x^2", ["x"])
        res = legendre_transform(f, ["x"], [3.0], [0.0])
        assert_allclose(res.x_star, [3.0], atol=1e-10)
        assert_allclose(res.f_tilde, 4.5, atol=1e-10)

    def test_scaled_quadratic_closed_form(self):
        # f = a x^2 / 2 => f~(y) = y^2/(2a); a=4, y=2 gives 0.5
        f = ex.parse_expression("0.5*a*x^2", ["x"], ["a"])
        res = legendre_transform(f, ["x"], [2.0], [1.0], params={"a": 4.0})
        assert_allclose(res.f_tilde, 0.5, atol=1e-10)

    def test_double_transform_returns_f(self):
        f = ex.parse_expression("0.5*a*x^2", ["x"], ["a"])
        val = legendre_double(f, ["x"], [1.7], {"a": 4.0})
        assert_allclose(val, 5.78, atol=1e-9)

    def test_involution_on_random_spd_quadratics(self):
        # module invariant: |((f~)~)(x) - f(x)| <= 1e-9 on sampled points
        rng = np.random.default_rng(3)
        for _ in range(20):
            n = rng.integers(1, 4)
            a = rng.normal(size=(n, n))
            spd = a @ a.T + (1.0 + rng.uniform()) * np.eye(n)
            terms = []
            names = [f"x{i}" for i in range(n)]
            for i in range(n):
                for j in range(n):
                    terms.append(f"({float(0.5 * spd[i, j])!r})*{names[i]}*{names[j]}")
            f = ex.parse_expression(" + ".join(terms), names)
            for _ in range(5):
                x = rng.normal(size=n)
                expected = 0.5 * x @ spd @ x
                assert abs(legendre_double(f, names, x) - expected) <= 1e-9

    def test_indefinite_hessian_rejected(self):
        f = ex.parse_expression("-0.5*x^2", ["x"])
        with pytest.raises(ValueError, match="positive definite"):
            legendre_transform(f, ["x"], [1.0], [0.5])

    def test_nonconvex_newton_with_backtracking(self):
        # strictly convex but non-quadratic: exp(x) + x^2
        f = ex.parse_expression("exp(x) + x^2", ["x"])
        res = legendre_transform(f, ["x"], [5.0], [0.0])
        jet = ex.jet2(f, ["x"], res.x_star)
        assert abs(jet.gradient[0] - 5.0) <= 1e-9


class TestValidation:
    def test_potential_must_use_coordinates(self):
        with pytest.raises(ValueError):
            LagrangianSystem.euclidean(["x"], "x + y")

    def test_unbound_parameter_rejected(self):
        with pytest.raises(ValueError, match="unbound"):
            LagrangianSystem.euclidean(["x"], ex.parse_expression("k*x", ["x"], ["k"]))

    def test_metric_symmetry_enforced(self):
        with pytest.raises(ValueError, match="symmetric"):
            LagrangianSystem.from_metric(["x", "y"],
                                         [["1", "x"], ["0", "1"]], "0*x")

    def test_admissible_predicate(self, kepler):
        sys = LagrangianSystem.euclidean(
            ["x"], "0.5*x^2", admissible=lambda q: q[0] > 0,
            excluded_desc="x > 0")
        from noetherlab.systems import InadmissibleStateError
        with pytest.raises(InadmissibleStateError):
            energy(sys, VelocityState([-1.0], [0.0]))
