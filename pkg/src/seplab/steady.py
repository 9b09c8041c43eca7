"""Subsonic zero-velocity equilibria: density, potential and their defects.

At equilibrium the enthalpy and the potential share their gradient, so the
density solves the nonlinear elliptic problem lap(Q(rho)) = rho - b under the
total-charge constraint. The solver iterates in the enthalpy variable: each
pass is one linear Neumann solve plus a scalar root find for the additive
enthalpy constant, with damping as the only control knob. The discrete
equilibrium produced this way is an exact fixed point of the time stepper
(well-balancing), because the integrator recomputes the identical potential
from the identical density.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .eos import PressureLaw
from .grid import Grid
from .poisson import apply_neumann_laplacian, solver_for

__all__ = [
    "SteadyStateError",
    "SteadyState",
    "constant_doping",
    "cosine_doping",
    "solve_steady",
]


class SteadyStateError(RuntimeError):
    """Carries the residual history of a failed equilibrium solve."""

    def __init__(self, message: str, history=None):
        super().__init__(message)
        self.history = list(history or [])


@dataclass(frozen=True)
class SteadyState:
    """Converged equilibrium: positive density, mean-zero potential."""

    rho: np.ndarray
    phi: np.ndarray
    residual: float
    iterations: int
    mass_defect: float

    @property
    def min_rho(self) -> float:
        return float(np.min(self.rho))


def constant_doping(grid: Grid, base: float = 1.0) -> np.ndarray:
    if base <= 0:
        raise ValueError("doping must be positive")
    return grid.scalar_field(base)


def cosine_doping(grid: Grid, base: float = 1.0, amp: float = 0.1) -> np.ndarray:
    """base + amp*cos(pi x / L) along the first axis; |amp| < base keeps b > 0."""
    if base <= 0 or abs(amp) >= base:
        raise ValueError("need base > 0 and |amp| < base for a positive profile")
    x = grid.coords()[0]
    return base + amp * np.cos(np.pi * x / grid.length[0])


def _enthalpy_shift(law: PressureLaw, phi: np.ndarray, weights: np.ndarray,
                    mass_target: float) -> float:
    """Additive constant c with total charge of Qinv(phi + c) equal to target."""
    volume = float(weights.sum())
    if law.gamma == 1.0:
        # closed form: Qinv is exponential, so c factors out
        scaled = float(np.sum(weights * np.exp(phi / law.K)))
        return law.K * float(np.log(mass_target / scaled))

    def charge(c):
        return float(np.sum(weights * law.enthalpy_inverse(phi + c))) - mass_target

    floor = -float(np.min(phi))  # enthalpy must stay positive for gamma > 1
    c0 = float(law.enthalpy(mass_target / volume))
    lo = max(c0, floor + 1e-300)
    span = max(abs(c0), 1.0)
    while charge(lo) > 0.0:
        lo = floor + 0.5 * (lo - floor)
        if lo - floor < 1e-15 * span:
            raise SteadyStateError(
                "no admissible enthalpy constant: charge exceeds target even as "
                "the enthalpy floor is approached (profile too strong?)"
            )
    hi = max(c0, floor + span)
    while charge(hi) < 0.0:
        hi = floor + 2.0 * (hi - floor)
    return float(brentq(charge, lo, hi, xtol=1e-14, rtol=1e-15))


def solve_steady(grid: Grid, law: PressureLaw, b: np.ndarray, tol: float = 1e-12,
                 max_iter: int = 200, theta: float = 0.5) -> SteadyState:
    """Damped fixed-point solve of lap(Q(rho)) = rho - b with charge matching.

    theta in (0, 1] blends the enthalpy-inverse update into the current iterate;
    it is halved whenever the residual grows. Density positivity is monitored
    every pass and aborts with a diagnostic rather than producing vacuum.
    """
    grid.check_scalar(b)
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must lie in (0, 1]")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if np.min(b) <= 0.0:
        raise ValueError("doping profile must be strictly positive")

    solver = solver_for(grid)
    weights = grid.quad_weights()
    mass_target = float(np.sum(weights * b))
    rho = np.array(b, dtype=float)

    def pde_residual(r):
        return grid.norm(apply_neumann_laplacian(grid, law.enthalpy(r)) - (r - b))

    history = []
    damping = theta
    prev = np.inf
    for iteration in range(1, max_iter + 1):
        phi, _ = solver.solve(rho - b)
        residual = pde_residual(rho)
        history.append(residual)
        if residual <= tol:
            rho, phi, residual = _polish(
                grid, law, b, solver, weights, mass_target, rho, phi, residual, tol
            )
            mass_defect = abs(float(np.sum(weights * (rho - b))))
            return SteadyState(rho, phi, residual, iteration, mass_defect)
        if residual > 1.5 * prev:  # genuine growth, not round-off jitter
            damping = max(damping / 2.0, 1.0 / 64.0)
        prev = residual

        shift = _enthalpy_shift(law, phi, weights, mass_target)
        candidate = (1.0 - damping) * rho + damping * law.enthalpy_inverse(phi + shift)
        if np.min(candidate) <= 0.0:
            raise SteadyStateError(
                f"density lost positivity at iteration {iteration} "
                f"(min {np.min(candidate):.3e}); reduce theta or the doping variation",
                history,
            )
        rho = candidate

    raise SteadyStateError(
        f"no convergence after {max_iter} iterations "
        f"(last residuals {history[-3:]})",
        history,
    )


def _polish(grid, law, b, solver, weights, mass_target, rho, phi, residual, tol):
    """Drive the enthalpy-potential gap to round-off with undamped passes.

    The residual tolerance alone leaves a small nonconstant gap between Q(rho)
    and phi; its gradient would slowly torque the time stepper away from rest.
    Full fixed-point passes contract that gap to machine precision, keeping
    the equilibrium an exact fixed point of the dynamics.
    """
    def pde_residual(r):
        return grid.norm(apply_neumann_laplacian(grid, law.enthalpy(r)) - (r - b))

    best = (rho, phi, residual)
    scale = grid.norm(rho)
    for _ in range(40):
        shift = _enthalpy_shift(law, phi, weights, mass_target)
        candidate = law.enthalpy_inverse(phi + shift)
        if np.min(candidate) <= 0.0:
            break
        moved = grid.norm(candidate - rho)
        rho = candidate
        phi, _ = solver.solve(rho - b)
        if moved <= 1e-15 * scale:
            break
    polished = pde_residual(rho)
    if polished <= tol:
        return rho, phi, polished
    return best
