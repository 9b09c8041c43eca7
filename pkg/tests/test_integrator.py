import numpy as np
import pytest

from seplab.eos import PressureLaw
from seplab.grid import Grid, project_normal
from seplab.integrator import (
    Perturbation,
    State,
    StepConfig,
    TrajectoryBlowup,
    initial_state,
    simulate,
    step,
)
from seplab.noise import NoiseModel
from seplab.poisson import solver_for
from seplab.steady import constant_doping, cosine_doping, solve_steady

from oracles import PinnedRNG, straight_line_euler_step

LAW = PressureLaw(K=1.0, gamma=2.0)


@pytest.fixture(scope="module")
def small_problem():
    g = Grid(1, 129, 1.0)
    b = cosine_doping(g, 1.0, 0.1)
    return g, b, solve_steady(g, LAW, b, tol=1e-10)


def make_state(grid, rho, u_vals):
    u = project_normal(grid, np.array(u_vals)[None].copy())
    phi, _ = solver_for(grid).solve(rho - np.ones(grid.shape))
    return State(0.0, np.asarray(rho, dtype=float), u, phi)


class TestSingleStepOracle:
    def test_matches_straight_line_implementation(self):
        # four interior nodes, hand-sized fields, pinned Gaussian draw
        g = Grid(1, 6, 1.0)
        h = g.h[0]
        b = np.ones(6)
        bump = np.array([0.0, 0.02, -0.01, -0.02, 0.01, 0.0])
        rho = 1.0 + bump
        u_vals = np.array([0.0, 0.03, -0.01, 0.02, -0.03, 0.0])
        state = make_state(g, rho, u_vals)

        noise = NoiseModel.geometric(3, kind="quadratic", eps=0.5)
        d_beta = np.array([0.017, -0.032, 0.011])
        dt = 1e-3
        from seplab.integrator import _stability_filter

        assert not _stability_filter(g, dt, 2.0, 1.0).active  # pure update here
        new, info = step(
            g, LAW, b, state, StepConfig(dt=dt), noise, PinnedRNG(d_beta)
        )
        assert info.dt_used == dt and not info.cfl_clamped

        rho_ref, u_ref, phi_ref = straight_line_euler_step(
            h, rho, u_vals, b, dt, LAW.K, LAW.gamma, state.tau,
            0.5, noise.weights, d_beta,
        )
        assert np.max(np.abs(new.rho - rho_ref)) <= 1e-14
        assert np.max(np.abs(new.u[0] - u_ref)) <= 1e-14
        assert np.max(np.abs(new.phi - phi_ref)) <= 1e-12


class TestWellBalancing:
    def test_steady_state_is_fixed_point(self, small_problem):
        g, b, ss = small_problem
        init = initial_state(g, LAW, b, ss, Perturbation("none"))
        traj = simulate(g, LAW, b, ss, init, 1.0, StepConfig(dt=1e-3), record_stride=200)
        assert np.max(traj.combined) <= 1e-9

    def test_heun_scheme_also_balanced(self, small_problem):
        g, b, ss = small_problem
        init = initial_state(g, LAW, b, ss, Perturbation("none"))
        cfg = StepConfig(dt=1e-3, scheme="heun_drift")
        traj = simulate(g, LAW, b, ss, init, 0.2, cfg, record_stride=100)
        assert np.max(traj.combined) <= 1e-9


class TestConservation:
    def test_mass_exact_per_step_random_states(self):
        rng = np.random.default_rng(31)
        g = Grid(1, 65, 1.0)
        b = np.ones(g.shape)
        noise = NoiseModel.geometric(4, kind="quadratic", eps=0.5)
        w = g.quad_weights()
        for trial in range(5):
            bump = rng.standard_normal(g.shape) * 0.05
            bump -= np.sum(w * bump) / w.sum()
            rho = 1.0 + bump
            state = make_state(g, rho, rng.standard_normal(g.shape) * 0.1)
            mass0 = g.integrate(state.rho)
            for _ in range(20):
                state, _ = step(g, LAW, b, state, StepConfig(dt=1e-4), noise, rng)
                assert abs(g.integrate(state.rho) - mass0) <= 1e-12 * abs(mass0)

    def test_boundary_velocity_stays_zero(self, small_problem):
        g, b, ss = small_problem
        rng = np.random.default_rng(4)
        init = initial_state(g, LAW, b, ss, Perturbation("cosine", 0.01))
        noise = NoiseModel.geometric(8, kind="quadratic", eps=0.5)
        state = init
        for _ in range(50):
            state, _ = step(g, LAW, b, state, StepConfig(dt=1e-3), noise, rng)
        assert abs(state.u[0, 0]) == 0.0
        assert abs(state.u[0, -1]) == 0.0


class TestInitialState:
    def test_zero_perturbation_is_steady(self, small_problem):
        g, b, ss = small_problem
        init = initial_state(g, LAW, b, ss, Perturbation("none"))
        assert np.array_equal(init.rho, ss.rho)
        assert np.all(init.u == 0.0)

    def test_cosine_mass_defect_zero(self, small_problem):
        g, b, ss = small_problem
        init = initial_state(g, LAW, b, ss, Perturbation("cosine", 0.01))
        assert abs(g.integrate(init.rho - ss.rho)) <= 1e-15

    def test_initial_norm_matches_analytic(self):
        # ||eps cos(pi x)||_3^2 = eps^2 (1+pi^2+pi^4+pi^6)/2 and
        # ||grad phi0||^2 = eps^2/(2 pi^2) for the solved potential offset
        from seplab.diagnostics import perturbation_norms

        g = Grid(1, 257, 1.0)
        b = np.ones(g.shape)
        law = LAW
        ss = solve_steady(g, law, b, tol=1e-12)
        eps = 0.01
        init = initial_state(g, law, b, ss, Perturbation("cosine", eps))
        norms = perturbation_norms(g, init, ss)
        expected = eps**2 * (
            (1 + np.pi**2 + np.pi**4 + np.pi**6) / 2.0 + 1.0 / (2.0 * np.pi**2)
        )
        assert norms.combined == pytest.approx(expected, rel=0.01)

    def test_floor_violation_rejected(self, small_problem):
        g, b, ss = small_problem
        with pytest.raises(ValueError, match="floor"):
            initial_state(g, LAW, b, ss, Perturbation("cosine", 2.0))


class TestStepControl:
    def test_cfl_clamp_recorded(self, small_problem):
        g, b, ss = small_problem
        init = initial_state(g, LAW, b, ss, Perturbation("cosine", 0.01))
        new, info = step(g, LAW, b, init, StepConfig(dt=1.0))
        assert info.cfl_clamped
        assert info.dt_used < 1.0
        assert new.t == pytest.approx(info.dt_used)

    @staticmethod
    def draining_state(g):
        # outflow from the density minimum so the continuity update digs it deeper
        x = g.axis_coords(0)
        w = g.quad_weights()
        bump = 0.2 * np.cos(np.pi * x)
        bump -= np.sum(w * bump) / w.sum()
        return make_state(g, 1.0 + bump, -0.5 * np.sin(np.pi * x))

    def test_floor_rejection_halves_dt(self):
        g = Grid(1, 65, 1.0)
        b = np.ones(g.shape)
        state = self.draining_state(g)
        # full step digs ~2.5e-3 below the current minimum; reject until dt/4
        floor = float(np.min(state.rho)) - 1e-3
        cfg = StepConfig(dt=2e-3, cfl=1.0, rho_floor=floor)
        new, info = step(g, LAW, b, state, cfg)
        assert info.halvings >= 1
        assert float(np.min(new.rho)) >= floor

    def test_blowup_after_max_halvings(self):
        g = Grid(1, 65, 1.0)
        b = np.ones(g.shape)
        state = self.draining_state(g)
        floor = float(np.min(state.rho)) - 1e-13  # violated at every dt halving
        with pytest.raises(TrajectoryBlowup):
            step(g, LAW, b, state, StepConfig(dt=2e-3, cfl=1.0, rho_floor=floor))

    def test_bad_config_rejected(self):
        with pytest.raises(ValueError):
            StepConfig(dt=0.0)
        with pytest.raises(ValueError):
            StepConfig(dt=1e-3, cfl=1.5)
        with pytest.raises(ValueError):
            StepConfig(dt=1e-3, scheme="milstein")


class TestSimulate:
    def test_zero_horizon_single_record(self, small_problem):
        g, b, ss = small_problem
        init = initial_state(g, LAW, b, ss, Perturbation("cosine", 0.01))
        traj = simulate(g, LAW, b, ss, init, 0.0, StepConfig(dt=1e-3))
        assert traj.times.size == 1
        assert traj.n_steps == 0

    def test_deterministic_runs_bit_identical(self, small_problem):
        g, b, ss = small_problem
        noise = NoiseModel.geometric(8, kind="quadratic", eps=0.5)
        init = initial_state(g, LAW, b, ss, Perturbation("cosine", 0.01))
        runs = []
        for _ in range(2):
            rng = np.random.default_rng(np.random.SeedSequence(entropy=99, spawn_key=(0,)))
            runs.append(
                simulate(g, LAW, b, ss, init, 0.5, StepConfig(dt=1e-3), noise, rng,
                         record_stride=50)
            )
        assert np.array_equal(runs[0].combined, runs[1].combined)
        assert np.array_equal(runs[0].sigma_norms, runs[1].sigma_norms)

    def test_noise_off_perturbation_decays(self, small_problem):
        g, b, ss = small_problem
        init = initial_state(g, LAW, b, ss, Perturbation("cosine", 0.01))
        traj = simulate(g, LAW, b, ss, init, 5.0, StepConfig(dt=1e-3), record_stride=500)
        assert traj.combined[-1] < traj.combined[0]
        assert np.all(traj.subsonic == 1.0)

    def test_final_time_hit_exactly(self, small_problem):
        g, b, ss = small_problem
        init = initial_state(g, LAW, b, ss, Perturbation("cosine", 0.01))
        traj = simulate(g, LAW, b, ss, init, 0.0105, StepConfig(dt=1e-3), record_stride=3)
        assert traj.times[-1] == pytest.approx(0.0105, abs=1e-12)


@pytest.fixture(scope="module")
def coarse():
    g = Grid(1, 65, 1.0)
    b = cosine_doping(g, 1.0, 0.1)
    return g, b, solve_steady(g, LAW, b, tol=1e-10)


class TestSelfConvergence:
    # dt chosen so the stability filter is inert on all dynamically active
    # modes at every level (dt Omega^2 stays under the friction budget there)
    T_END = 0.25

    def run_final(self, scheme, dt, small):
        g, b, ss = small
        init = initial_state(g, LAW, b, ss, Perturbation("cosine", 0.01))
        cfg = StepConfig(dt=dt, scheme=scheme)
        traj_state = init
        while traj_state.t < self.T_END - 1e-12:
            traj_state, _ = step(
                g, LAW, b, traj_state, cfg, max_dt=self.T_END - traj_state.t
            )
        return traj_state

    def test_euler_first_order(self, coarse):
        g = coarse[0]
        ref = self.run_final("euler_maruyama", 5e-5, coarse)
        e1 = g.norm(self.run_final("euler_maruyama", 4e-4, coarse).rho - ref.rho)
        e2 = g.norm(self.run_final("euler_maruyama", 2e-4, coarse).rho - ref.rho)
        # against a dt/8 reference the first-order ratio is (1-1/8)/(1/2-1/8)=7/3
        assert 1.9 <= e1 / e2 <= 2.8

    def test_heun_drift_second_order(self, coarse):
        g = coarse[0]
        ref = self.run_final("heun_drift", 5e-5, coarse)
        e1 = g.norm(self.run_final("heun_drift", 4e-4, coarse).rho - ref.rho)
        e2 = g.norm(self.run_final("heun_drift", 2e-4, coarse).rho - ref.rho)
        # second order against a dt/8 reference: (1-1/64)/(1/4-1/64) = 4.2
        assert 3.2 <= e1 / e2 <= 5.2
