"""Truncated cylindrical Wiener forcing with state-dependent amplitude.

Every mode k carries the same velocity-aligned field rho*u*Y(rho,u) scaled by a
positive weight a_k with sum(a_k^2) = 1; in the velocity equation this shows up
as u * Y(rho,u) * sum_k a_k dbeta_k. Because the modes differ only by scalar
weights, the K-mode drive collapses in law to a single Brownian increment of
the same variance; the multi-mode path is kept to exercise the bookkeeping.

The amplitude choices:
  quadratic  Y = eps * rho * (u . d)   smooth, |Y| <= eps |rho u|
  bounded    Y = eps * tanh(rho * (u . d))
  off        Y = 0
with d a fixed unit direction so Y stays smooth through u = 0. The forcing
vanishes identically at any rest state, making the equilibrium an exact fixed
point of the stochastic dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Grid

__all__ = ["NoiseModel", "NoiseIncrement", "geometric_weights"]

KINDS = ("quadratic", "bounded", "off")


def geometric_weights(modes: int) -> np.ndarray:
    """Default mode weights a_k proportional to 2^(-k/2), normalized exactly."""
    if modes < 1:
        raise ValueError("need at least one mode")
    w = 2.0 ** (-0.5 * np.arange(1, modes + 1))
    return w / np.sqrt(np.sum(w * w))


@dataclass(frozen=True)
class NoiseIncrement:
    """One batch of independent Brownian increments, each N(0, dt)."""

    d_beta: np.ndarray
    dt: float


@dataclass(frozen=True, eq=False)
class NoiseModel:
    weights: np.ndarray
    kind: str = "off"
    eps: float = 0.0
    direction: np.ndarray = field(default_factory=lambda: np.array([1.0]))

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        if w.ndim != 1 or w.size < 1 or np.any(w <= 0):
            raise ValueError("weights must be a 1-D array of positive numbers")
        if abs(float(np.sum(w * w)) - 1.0) > 1e-12:
            raise ValueError("weights must satisfy sum(a_k^2) = 1")
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")
        d = np.asarray(self.direction, dtype=float)
        object.__setattr__(self, "direction", d)
        if abs(float(np.dot(d, d)) - 1.0) > 1e-12:
            raise ValueError("direction must be a unit vector")

    @classmethod
    def geometric(cls, modes: int = 8, kind: str = "quadratic", eps: float = 1.0,
                  dim: int = 1) -> "NoiseModel":
        direction = np.zeros(dim)
        direction[0] = 1.0
        return cls(geometric_weights(modes), kind, eps, direction)

    @classmethod
    def off(cls, dim: int = 1) -> "NoiseModel":
        direction = np.zeros(dim)
        direction[0] = 1.0
        return cls(np.array([1.0]), "off", 0.0, direction)

    @property
    def modes(self) -> int:
        return int(self.weights.size)

    def sample_increment(self, dt: float, rng: np.random.Generator) -> NoiseIncrement:
        if dt <= 0:
            raise ValueError("dt must be positive")
        return NoiseIncrement(rng.normal(0.0, np.sqrt(dt), self.modes), dt)

    def y_value(self, rho, u):
        """Amplitude Y at given density and velocity.

        `u` is a velocity with leading component axis (shape (dim, ...)), or a
        plain scalar/array treated as the single component of a 1-D velocity.
        """
        u = np.asarray(u, dtype=float)
        if u.ndim > 0 and u.shape[0] == self.direction.size:
            if self.direction.size == 1:
                along = self.direction[0] * u[0]
            else:
                along = np.tensordot(self.direction, u, axes=(0, 0))
        else:
            along = u * self.direction[0]
        if self.kind == "off":
            return np.zeros_like(along * 1.0)
        if self.kind == "quadratic":
            return self.eps * rho * along
        return self.eps * np.tanh(rho * along)

    def velocity_noise_term(self, grid: Grid, rho: np.ndarray, u: np.ndarray,
                            inc: NoiseIncrement) -> np.ndarray:
        """u * Y(rho, u) * sum_k a_k dbeta_k on the given grid.

        Parallel to u, so the boundary normal component stays zero whenever u's
        is; at rest the term vanishes identically.
        """
        grid.check_scalar(rho)
        grid.check_vector(u)
        if self.direction.size != grid.dim:
            raise ValueError("noise direction dimension does not match grid")
        if self.kind == "off":
            return np.zeros_like(u)
        kick = float(np.dot(self.weights, inc.d_beta))
        return u * (self.y_value(rho, u) * kick)[None]
