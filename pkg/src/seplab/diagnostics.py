"""Norms and functionals tracked along runs: offsets from equilibrium, the
equilibrium-frozen quadratic energy, and exponentially weighted series.

The headline scalar is `combined`: the squared H^3 norms of the density offset
and the velocity plus the squared L^2 norm of the potential-gradient offset.
Decay of this quantity (pathwise or in moments) is what the experiments fit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .eos import PressureLaw
from .grid import Grid, gradient, sobolev_norms_upto

__all__ = ["PerturbationNorms", "perturbation_norms", "energy", "weighted_series"]


@dataclass(frozen=True)
class PerturbationNorms:
    """Sobolev norms of the offset fields at one instant.

    sigma and u hold orders 0..3; grad_phi is gauge independent (an additive
    constant in either potential drops out of the gradient).
    """

    t: float
    sigma: np.ndarray
    u: np.ndarray
    grad_phi: float
    combined: float


def perturbation_norms(grid: Grid, state, steady) -> PerturbationNorms:
    """H^k norms (k=0..3) of density/velocity offsets plus the field offset."""
    sigma = state.rho - steady.rho
    if sigma.shape != grid.shape:
        raise ValueError("state and grid shapes disagree")
    sigma_norms = sobolev_norms_upto(grid, sigma, 3)
    u_norms = sobolev_norms_upto(grid, state.u, 3)
    grad_phi = grid.norm(gradient(grid, state.phi - steady.phi))
    combined = float(sigma_norms[3] ** 2 + u_norms[3] ** 2 + grad_phi**2)
    return PerturbationNorms(state.t, sigma_norms, u_norms, grad_phi, combined)


def energy(grid: Grid, law: PressureLaw, state, steady) -> float:
    """Quadratic form 1/2 int(rho_eq |u|^2 + Q'(rho_eq) sigma^2 + |grad phi|^2).

    The coefficients are frozen at the equilibrium, so positivity needs only
    min(rho_eq) > 0; the value vanishes exactly at the equilibrium itself.
    """
    sigma = state.rho - steady.rho
    gp = gradient(grid, state.phi - steady.phi)
    usq = np.sum(state.u**2, axis=0)
    gpsq = np.sum(gp**2, axis=0)
    integrand = 0.5 * (steady.rho * usq + law.denthalpy(steady.rho) * sigma**2 + gpsq)
    return grid.integrate(integrand)


def weighted_series(times: np.ndarray, values: np.ndarray, alpha: float) -> np.ndarray:
    """exp(alpha t) * values; bounded output certifies decay at rate >= alpha."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    return np.exp(alpha * np.asarray(times)) * np.asarray(values)
