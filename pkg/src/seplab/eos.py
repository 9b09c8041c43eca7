"""Gamma-law pressure with the matching enthalpy and the subsonic predicate.

The enthalpy is the primitive of P'(rho)/rho, so grad(Q(rho)) = grad(P(rho))/rho;
at a zero-velocity equilibrium it balances the electrostatic potential node by
node, which is what the steady solver exploits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["PressureLaw"]


def _require_positive(rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0.0):
        raise ValueError("density must be strictly positive")
    return rho


@dataclass(frozen=True)
class PressureLaw:
    """P(rho) = K rho^gamma with K > 0 and gamma >= 1."""

    K: float = 1.0
    gamma: float = 2.0
    kind: str = "gamma_law"

    def __post_init__(self):
        if self.K <= 0.0:
            raise ValueError("K must be positive")
        if self.gamma < 1.0:
            raise ValueError("gamma must be at least 1")
        if self.kind != "gamma_law":
            raise ValueError("only the gamma-law pressure is supported")

    def pressure(self, rho):
        rho = _require_positive(rho)
        return self.K * rho**self.gamma

    def dpressure(self, rho):
        """P'(rho) = K gamma rho^(gamma-1); also the squared sound speed."""
        rho = _require_positive(rho)
        return self.K * self.gamma * rho ** (self.gamma - 1.0)

    def enthalpy(self, rho):
        """Q(rho): K gamma/(gamma-1) rho^(gamma-1) for gamma>1, K log rho at gamma=1."""
        rho = _require_positive(rho)
        if self.gamma == 1.0:
            return self.K * np.log(rho)
        c = self.K * self.gamma / (self.gamma - 1.0)
        return c * rho ** (self.gamma - 1.0)

    def denthalpy(self, rho):
        """Q'(rho) = P'(rho)/rho."""
        rho = _require_positive(rho)
        return self.K * self.gamma * rho ** (self.gamma - 2.0)

    def enthalpy_inverse(self, q):
        """Inverse of the enthalpy on its range ((0,inf) for gamma>1, R at gamma=1)."""
        q = np.asarray(q, dtype=float)
        if self.gamma == 1.0:
            return np.exp(q / self.K)
        if np.any(q <= 0.0):
            raise ValueError("enthalpy value outside range: must be positive for gamma>1")
        c = self.K * self.gamma / (self.gamma - 1.0)
        return (q / c) ** (1.0 / (self.gamma - 1.0))

    def is_subsonic(self, rho, u) -> np.ndarray:
        """True where P'(rho) > |u|^2 (strict).

        `u` may be a scalar speed, a velocity vector, or a vector field whose
        leading axis indexes components.
        """
        rho = _require_positive(rho)
        u = np.asarray(u, dtype=float)
        if u.ndim > np.ndim(rho):
            usq = np.sum(u * u, axis=0)
        elif u.ndim == 1 and np.ndim(rho) == 0:
            usq = float(np.dot(u, u))
        else:
            usq = u * u
        return self.dpressure(rho) > usq
