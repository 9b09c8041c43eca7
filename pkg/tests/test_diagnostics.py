import numpy as np
import pytest

from seplab.diagnostics import energy, perturbation_norms, weighted_series
from seplab.eos import PressureLaw
from seplab.grid import Grid, project_normal
from seplab.integrator import Perturbation, State, initial_state
from seplab.poisson import solver_for
from seplab.steady import constant_doping, cosine_doping, solve_steady

LAW = PressureLaw(K=1.0, gamma=2.0)


@pytest.fixture(scope="module")
def problem():
    g = Grid(1, 257, 1.0)
    b = cosine_doping(g, 1.0, 0.1)
    ss = solve_steady(g, LAW, b, tol=1e-10)
    return g, b, ss


def steady_as_state(ss):
    dim_shape = (1,) + ss.rho.shape
    return State(0.0, ss.rho.copy(), np.zeros(dim_shape), ss.phi.copy())


class TestPerturbationNorms:
    def test_zero_at_steady(self, problem):
        g, b, ss = problem
        norms = perturbation_norms(g, steady_as_state(ss), ss)
        assert norms.combined == 0.0
        assert np.all(norms.sigma == 0.0)
        assert np.all(norms.u == 0.0)
        assert norms.grad_phi == 0.0

    def test_cosine_l2_analytic(self, problem):
        g, b, ss = problem
        init = initial_state(g, LAW, b, ss, Perturbation("cosine", 0.01))
        norms = perturbation_norms(g, init, ss)
        assert norms.sigma[0] == pytest.approx(0.01 / np.sqrt(2.0), rel=0.01)

    def test_norm_monotone_in_k(self, problem):
        g, b, ss = problem
        rng = np.random.default_rng(1)
        state = steady_as_state(ss)
        state.rho = state.rho + 0.01 * rng.standard_normal(g.shape)
        state.u = project_normal(g, 0.01 * rng.standard_normal((1,) + g.shape))
        norms = perturbation_norms(g, state, ss)
        assert np.all(np.diff(norms.sigma) >= 0.0)
        assert np.all(np.diff(norms.u) >= 0.0)

    def test_gauge_independent(self, problem):
        g, b, ss = problem
        init = initial_state(g, LAW, b, ss, Perturbation("cosine", 0.01))
        shifted = State(init.t, init.rho, init.u, init.phi + 3.7, init.tau)
        a = perturbation_norms(g, init, ss)
        c = perturbation_norms(g, shifted, ss)
        assert a.grad_phi == pytest.approx(c.grad_phi, rel=1e-12)


class TestEnergy:
    def test_zero_at_steady(self, problem):
        g, b, ss = problem
        assert energy(g, LAW, steady_as_state(ss), ss) == pytest.approx(0.0, abs=1e-28)

    def test_velocity_only_quadrature(self, problem):
        g, b, ss = problem
        rng = np.random.default_rng(2)
        state = steady_as_state(ss)
        state.u = project_normal(g, 0.05 * rng.standard_normal((1,) + g.shape))
        expected = 0.5 * g.integrate(ss.rho * state.u[0] ** 2)
        assert energy(g, LAW, state, ss) == pytest.approx(expected, rel=1e-13)

    def test_equivalent_to_low_order_norms(self, problem):
        # c1 (||sigma||^2+||u||^2+||grad phi||^2) <= E <= c2 (same), with
        # c1, c2 from the extremes of the equilibrium coefficients
        g, b, ss = problem
        qprime = LAW.denthalpy(ss.rho)
        c1 = 0.5 * min(ss.rho.min(), qprime.min(), 1.0)
        c2 = 0.5 * max(ss.rho.max(), qprime.max(), 1.0)
        rng = np.random.default_rng(3)
        for _ in range(10):
            state = steady_as_state(ss)
            state.rho = state.rho + 0.05 * rng.standard_normal(g.shape)
            state.u = project_normal(g, 0.05 * rng.standard_normal((1,) + g.shape))
            state.phi, _ = solver_for(g).solve(
                state.rho - b - g.integrate(state.rho - b) / g.integrate(np.ones(g.shape))
            )
            from seplab.grid import gradient

            low = (
                g.norm(state.rho - ss.rho) ** 2
                + g.norm(state.u) ** 2
                + g.norm(gradient(g, state.phi - ss.phi)) ** 2
            )
            e = energy(g, LAW, state, ss)
            assert c1 * low <= e + 1e-15
            assert e <= c2 * low + 1e-15


class TestWeightedSeries:
    def test_alpha_zero_identity(self):
        t = np.linspace(0, 5, 20)
        v = np.random.default_rng(0).random(20)
        assert np.array_equal(weighted_series(t, v, 0.0), v)

    def test_exact_exponential_flattens(self):
        t = np.linspace(0, 10, 50)
        v = np.exp(-0.7 * t)
        w = weighted_series(t, v, 0.7)
        assert np.allclose(w, 1.0, rtol=1e-12)

    def test_negative_alpha_rejected(self):
        with pytest.raises(ValueError):
            weighted_series(np.array([0.0]), np.array([1.0]), -0.1)
