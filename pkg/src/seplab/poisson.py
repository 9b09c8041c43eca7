"""Poisson solves with homogeneous Neumann data and the mean-zero gauge.

The operator inverted here is the compact 2*dim+1 point stencil closed by even
ghost reflection; its eigenvectors are exactly the tensor cosine modes, so the
transform path is a direct solve, not an iteration. In 1-D the same system is
solved directly by double accumulation of the stencil relations.

The right-hand side must carry (numerically) zero total charge: a defect above
the gate is a sign of mass leakage upstream, not of round-off, and is rejected.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.fft import dctn, idctn

from .grid import Grid

__all__ = [
    "MassCompatibilityError",
    "PoissonReport",
    "NeumannPoisson",
    "solver_for",
    "apply_neumann_laplacian",
]

#: relative size of the admissible total-charge defect in the right-hand side
COMPAT_GATE = 1e-8


class MassCompatibilityError(ValueError):
    """Right-hand side of a Neumann solve carries too much net charge."""


@dataclass(frozen=True)
class PoissonReport:
    residual: float
    compat_defect: float


def apply_neumann_laplacian(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Compact second-difference Laplacian with even ghost reflection.

    This is the solver's own stencil, used for elliptic residuals; the wide
    divergence(gradient(.)) composition lives in the grid module.
    """
    grid.check_scalar(f)
    out = np.zeros(grid.shape)
    for d in range(grid.dim):
        g = f if d == 0 else np.moveaxis(f, d, 0)
        acc = out if d == 0 else np.moveaxis(out, d, 0)
        h2 = grid.h[d] ** 2
        acc[1:-1] += (g[2:] - 2.0 * g[1:-1] + g[:-2]) / h2
        acc[0] += 2.0 * (g[1] - g[0]) / h2
        acc[-1] += 2.0 * (g[-2] - g[-1]) / h2
    return out


def _axis_eigenvalues(n: int, h: float) -> np.ndarray:
    k = np.arange(n)
    return -(2.0 - 2.0 * np.cos(np.pi * k / (n - 1))) / h**2


class NeumannPoisson:
    """Direct solver for the compact Neumann Laplacian on one grid.

    method "direct" integrates the 1-D tridiagonal relations twice; "dct"
    diagonalizes in the cosine basis (any dimension). "auto" picks direct in
    1-D and dct otherwise. Both land on the identical discrete solution.
    """

    def __init__(self, grid: Grid, method: str = "auto"):
        if method not in ("auto", "direct", "dct"):
            raise ValueError(f"unknown method {method!r}")
        if method == "auto":
            method = "direct" if grid.dim == 1 else "dct"
        if method == "direct" and grid.dim != 1:
            raise ValueError("the direct path is 1-D only")
        self.grid = grid
        self.method = method
        self._weights = grid.quad_weights()
        self._volume = float(self._weights.sum())
        if method == "dct":
            lam = np.zeros(grid.shape)
            for d in range(grid.dim):
                shape = [1] * grid.dim
                shape[d] = grid.n[d]
                lam = lam + _axis_eigenvalues(grid.n[d], grid.h[d]).reshape(shape)
            lam_flat = lam.copy()
            lam_flat.flat[0] = 1.0  # zero mode handled separately
            self._lam = lam_flat

    def _solve_direct(self, rhs: np.ndarray) -> np.ndarray:
        h = self.grid.h[0]
        # face fluxes g_{i+1/2} = (phi_{i+1}-phi_i)/h from the stencil rows
        flux = np.empty(self.grid.n[0] - 1)
        flux[0] = 0.5 * h * rhs[0]
        flux[1:] = h * rhs[1:-1]
        np.cumsum(flux, out=flux)
        phi = np.empty(self.grid.n[0])
        phi[0] = 0.0
        np.cumsum(h * flux, out=phi[1:])
        return phi

    def _solve_dct(self, rhs: np.ndarray) -> np.ndarray:
        coeff = dctn(rhs, type=1)
        coeff.flat[0] = 0.0
        coeff /= self._lam
        return idctn(coeff, type=1)

    def solve(self, rhs: np.ndarray, tol: float = 1e-10):
        """Return (phi, report) with mean(phi)=0 and the residual contract met."""
        self.grid.check_scalar(rhs)
        rhs = np.asarray(rhs, dtype=float)
        rhs_norm = self.grid.norm(rhs)
        net = float(np.sum(self._weights * rhs))
        defect = abs(net)
        if defect > COMPAT_GATE * rhs_norm:
            raise MassCompatibilityError(
                f"net charge defect {defect:.3e} exceeds gate "
                f"{COMPAT_GATE * rhs_norm:.3e}; check mass conservation upstream"
            )
        if rhs_norm == 0.0:
            return np.zeros(self.grid.shape), PoissonReport(0.0, defect)

        rhs0 = rhs - net / self._volume
        raw = self._solve_direct if self.method == "direct" else self._solve_dct
        phi = raw(rhs0)
        # one pass of iterative refinement keeps the accumulated round-off of
        # the direct paths well under the residual contract
        rel = None
        for _ in range(2):
            r = rhs0 - apply_neumann_laplacian(self.grid, phi)
            rel = self.grid.norm(r) / rhs_norm
            if rel <= 0.1 * tol:
                break
            phi = phi + raw(r)
        phi -= float(np.sum(self._weights * phi)) / self._volume
        if rel > tol:
            rel = self.grid.norm(apply_neumann_laplacian(self.grid, phi) - rhs0) / rhs_norm
            if rel > tol:
                raise RuntimeError(f"poisson residual {rel:.3e} above tolerance {tol:.1e}")
        return phi, PoissonReport(rel, defect)


@lru_cache(maxsize=16)
def solver_for(grid: Grid) -> NeumannPoisson:
    """Shared per-grid solver; grids are immutable so caching is safe."""
    return NeumannPoisson(grid)
