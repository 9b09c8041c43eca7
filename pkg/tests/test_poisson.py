import numpy as np
import pytest

from seplab.grid import Grid, gradient, normal_component_max
from seplab.poisson import (
    MassCompatibilityError,
    NeumannPoisson,
    apply_neumann_laplacian,
    solver_for,
)


def mean_zero_random(grid, rng):
    f = rng.standard_normal(grid.shape)
    w = grid.quad_weights()
    return f - np.sum(w * f) / np.sum(w)


class TestSolve1D:
    def test_zero_rhs(self):
        g = Grid(1, 33)
        phi, report = NeumannPoisson(g).solve(np.zeros(g.shape))
        assert np.all(phi == 0.0)
        assert report.residual == 0.0

    def test_cosine_analytic(self):
        # -phi'' = -cos(pi x)/pi^2 ... solving lap(phi) = cos(pi x) gives
        # phi = -cos(pi x)/pi^2 up to O(h^2)
        g = Grid(1, 257, 1.0)
        x = g.axis_coords(0)
        phi, report = NeumannPoisson(g).solve(np.cos(np.pi * x))
        exact = -np.cos(np.pi * x) / np.pi**2
        assert np.max(np.abs(phi - exact)) <= 1e-5
        assert report.residual <= 1e-10

    def test_round_trip_random(self):
        rng = np.random.default_rng(8)
        g = Grid(1, 33)
        rhs = mean_zero_random(g, rng)
        phi, report = NeumannPoisson(g).solve(rhs)
        back = apply_neumann_laplacian(g, phi)
        assert g.norm(back - rhs) <= 1e-12 * g.norm(rhs)
        assert report.residual <= 1e-12

    def test_mean_zero_gauge(self):
        rng = np.random.default_rng(9)
        g = Grid(1, 65)
        phi, _ = NeumannPoisson(g).solve(mean_zero_random(g, rng))
        assert abs(g.integrate(phi)) <= 1e-12

    def test_linearity(self):
        rng = np.random.default_rng(10)
        g = Grid(1, 49)
        f1 = mean_zero_random(g, rng)
        f2 = mean_zero_random(g, rng)
        s = NeumannPoisson(g)
        combo, _ = s.solve(2.0 * f1 - 3.0 * f2)
        p1, _ = s.solve(f1)
        p2, _ = s.solve(f2)
        assert g.norm(combo - (2.0 * p1 - 3.0 * p2)) <= 1e-11 * g.norm(combo)

    def test_compat_violation_rejected(self):
        g = Grid(1, 33)
        rhs = np.ones(g.shape)  # pure net charge
        with pytest.raises(MassCompatibilityError, match="defect"):
            NeumannPoisson(g).solve(rhs)

    def test_solution_has_insulating_gradient(self):
        rng = np.random.default_rng(11)
        g = Grid(1, 33)
        phi, _ = NeumannPoisson(g).solve(mean_zero_random(g, rng))
        assert normal_component_max(g, gradient(g, phi)) == 0.0

    def test_direct_and_dct_paths_agree(self):
        rng = np.random.default_rng(12)
        g = Grid(1, 41)
        rhs = mean_zero_random(g, rng)
        direct, _ = NeumannPoisson(g, method="direct").solve(rhs)
        spectral, _ = NeumannPoisson(g, method="dct").solve(rhs)
        assert np.max(np.abs(direct - spectral)) <= 1e-11


class TestSolveMultiD:
    def test_manufactured_2d(self):
        g = Grid(2, 129, 1.0)
        x, y = g.coords()
        exact = np.cos(np.pi * x) * np.cos(2 * np.pi * y)
        rhs = -(np.pi**2 + 4 * np.pi**2) * exact
        phi, report = NeumannPoisson(g).solve(rhs)
        assert report.residual <= 1e-11
        assert np.max(np.abs(phi - exact)) <= 5e-4  # O(h^2) discretization

    def test_round_trip_2d(self):
        rng = np.random.default_rng(13)
        g = Grid(2, 17)
        rhs = mean_zero_random(g, rng)
        phi, report = NeumannPoisson(g).solve(rhs)
        assert report.residual <= 1e-11
        assert abs(g.integrate(phi)) <= 1e-12

    def test_3d_smoke(self):
        rng = np.random.default_rng(14)
        g = Grid(3, 9)
        rhs = mean_zero_random(g, rng)
        phi, report = NeumannPoisson(g).solve(rhs)
        assert report.residual <= 1e-11


class TestSolverCache:
    def test_shared_instance(self):
        g = Grid(1, 33)
        assert solver_for(g) is solver_for(Grid(1, 33))
