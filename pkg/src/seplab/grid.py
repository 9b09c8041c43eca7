"""Uniform node-centered grids on a box with insulating-boundary difference operators.

The boundary closure is chosen so that the no-flux conditions (zero normal
velocity, zero normal potential gradient) hold at machine precision:

* scalar derivatives use even ghost reflection (f[-1] = f[1]), so the normal
  derivative of any scalar vanishes exactly at boundary nodes;
* the divergence uses odd ghost reflection (v[-1] = -v[1]), which is the exact
  adjoint of the gradient under trapezoidal quadrature weights.

That adjoint pairing (summation by parts) is what makes discrete mass and
energy bookkeeping exact rather than merely second-order accurate.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

__all__ = [
    "Grid",
    "gradient",
    "divergence",
    "laplacian",
    "project_normal",
    "normal_component_max",
    "sobolev_norm",
    "sobolev_norms_upto",
]

#: boundary normal components larger than this are rejected by `divergence`
NORMAL_TOL = 1e-12


def _as_tuple(value, dim: int, name: str) -> tuple:
    if np.isscalar(value):
        return (value,) * dim
    value = tuple(value)
    if len(value) != dim:
        raise ValueError(f"{name} must be a scalar or a length-{dim} sequence")
    return value


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid over a box, node-centered, boundary nodes included.

    Parameters
    ----------
    dim : int
        Spatial dimension, 1, 2 or 3.
    n : int or sequence of int
        Nodes per axis (including both boundary nodes), at least 4.
    length : float or sequence of float
        Physical side length per axis; spacing is length/(n-1).
    """

    dim: int
    n: tuple
    length: tuple

    def __init__(self, dim: int, n, length=1.0):
        if dim not in (1, 2, 3):
            raise ValueError("dim must be 1, 2 or 3")
        n = _as_tuple(n, dim, "n")
        length = _as_tuple(length, dim, "length")
        if any(int(m) < 4 for m in n):
            raise ValueError("need at least 4 nodes per axis")
        if any(l <= 0 for l in length):
            raise ValueError("side lengths must be positive")
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "n", tuple(int(m) for m in n))
        object.__setattr__(self, "length", tuple(float(l) for l in length))

    @property
    def shape(self) -> tuple:
        return self.n

    @property
    def h(self) -> tuple:
        cached = self.__dict__.get("_h")
        if cached is None:
            cached = tuple(l / (m - 1) for l, m in zip(self.length, self.n))
            self.__dict__["_h"] = cached
        return cached

    @property
    def num_nodes(self) -> int:
        return int(np.prod(self.n))

    def axis_coords(self, axis: int) -> np.ndarray:
        return np.linspace(0.0, self.length[axis], self.n[axis])

    def coords(self) -> list:
        """Coordinate arrays of full grid shape, one per axis."""
        axes = [self.axis_coords(d) for d in range(self.dim)]
        return list(np.meshgrid(*axes, indexing="ij"))

    def quad_weights(self) -> np.ndarray:
        """Tensor-product trapezoidal weights (h at interior, h/2 at faces).

        The array is cached and shared; treat it as read-only.
        """
        cached = self.__dict__.get("_weights")
        if cached is None:
            w = np.ones(())
            for d in range(self.dim):
                wd = np.full(self.n[d], self.h[d])
                wd[0] *= 0.5
                wd[-1] *= 0.5
                w = np.multiply.outer(w, wd)
            self.__dict__["_weights"] = cached = w
        return cached

    def integrate(self, f: np.ndarray) -> float:
        return float(np.sum(self.quad_weights() * f))

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        """Weighted inner product; vector fields contract over components too."""
        w = self.quad_weights()
        if f.shape == self.shape:
            return float(np.sum(w * f * g))
        if f.shape == (self.dim,) + self.shape:
            return float(np.sum(w * f * g))
        raise ValueError("field shape does not match grid")

    def norm(self, f: np.ndarray) -> float:
        return float(np.sqrt(max(self.inner(f, f), 0.0)))

    def scalar_field(self, fill: float = 0.0) -> np.ndarray:
        return np.full(self.shape, fill, dtype=float)

    def vector_field(self) -> np.ndarray:
        return np.zeros((self.dim,) + self.shape)

    def check_scalar(self, f: np.ndarray) -> None:
        if f.shape != self.shape:
            raise ValueError(f"scalar field shape {f.shape} != grid shape {self.shape}")

    def check_vector(self, v: np.ndarray) -> None:
        if v.shape != (self.dim,) + self.shape:
            raise ValueError(
                f"vector field shape {v.shape} != {(self.dim,) + self.shape}"
            )


def _diff(f: np.ndarray, axis: int, h: float, closure: str) -> np.ndarray:
    """Centered first derivative along one axis with the given boundary closure.

    closure "even": ghost reflection f[-1] = f[1] (the derivative is 0 at faces);
    closure "odd":  ghost reflection f[-1] = -f[1];
    closure "onesided": first-order forward/backward differences at the faces.
    """
    g = f if axis == 0 else np.moveaxis(f, axis, 0)
    out = np.empty_like(g)
    out[1:-1] = (g[2:] - g[:-2]) / (2.0 * h)
    if closure == "even":
        out[0] = 0.0
        out[-1] = 0.0
    elif closure == "odd":
        out[0] = g[1] / h
        out[-1] = -g[-2] / h
    elif closure == "onesided":
        out[0] = (g[1] - g[0]) / h
        out[-1] = (g[-1] - g[-2]) / h
    else:  # pragma: no cover
        raise ValueError(f"unknown closure {closure!r}")
    return out if axis == 0 else np.moveaxis(out, 0, axis)


def gradient(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Second-order gradient with even ghost reflection at the boundary.

    The normal component at boundary nodes is exactly zero, matching the
    insulating condition on the potential.
    """
    grid.check_scalar(f)
    out = np.empty((grid.dim,) + grid.shape)
    for d in range(grid.dim):
        out[d] = _diff(f, d, grid.h[d], "even")
    return out


def normal_component_max(grid: Grid, v: np.ndarray) -> float:
    """Largest boundary normal component magnitude over all faces."""
    grid.check_vector(v)
    worst = 0.0
    for d in range(grid.dim):
        comp = v[d] if d == 0 else np.moveaxis(v[d], d, 0)
        worst = max(worst, float(np.max(np.abs(comp[0]))), float(np.max(np.abs(comp[-1]))))
    return worst


def project_normal(grid: Grid, v: np.ndarray) -> np.ndarray:
    """Zero the normal component on each boundary face (in place); returns v."""
    grid.check_vector(v)
    for d in range(grid.dim):
        comp = v[d] if d == 0 else np.moveaxis(v[d], d, 0)
        comp[0] = 0.0
        comp[-1] = 0.0
    return v


def divergence(grid: Grid, v: np.ndarray) -> np.ndarray:
    """Discrete divergence, the exact negative adjoint of `gradient`.

    Requires the boundary normal component of v to vanish (within NORMAL_TOL);
    under that condition <gradient(f), v> = -<f, divergence(v)> holds to
    round-off for the trapezoidal inner product.
    """
    grid.check_vector(v)
    worst = normal_component_max(grid, v)
    if worst > NORMAL_TOL:
        raise ValueError(
            f"divergence needs zero boundary normal component; found {worst:.3e}"
        )
    out = np.zeros(grid.shape)
    for d in range(grid.dim):
        out += _diff(v[d], d, grid.h[d], "odd")
    return out


def laplacian(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Composition divergence(gradient(f)); see the Poisson module for the
    compact solver stencil used in elliptic residuals."""
    return divergence(grid, gradient(grid, f))


def _axis_derivative(f: np.ndarray, axis: int, h: float, order: int) -> np.ndarray:
    """Direct derivative stencil of the given order along one axis.

    Centered in the interior; forward/backward one-sided stencils of the same
    order where the centered ones leave the grid (consistent at the faces, so
    repeated differencing never divides an O(1) defect by h).
    """
    g = f if axis == 0 else np.moveaxis(f, axis, 0)
    out = np.empty_like(g)
    if order == 1:
        out[1:-1] = (g[2:] - g[:-2]) / (2.0 * h)
        out[0] = (g[1] - g[0]) / h
        out[-1] = (g[-1] - g[-2]) / h
    elif order == 2:
        h2 = h * h
        out[1:-1] = (g[2:] - 2.0 * g[1:-1] + g[:-2]) / h2
        out[0] = (g[0] - 2.0 * g[1] + g[2]) / h2
        out[-1] = (g[-1] - 2.0 * g[-2] + g[-3]) / h2
    elif order == 3:
        h3 = h**3
        out[2:-2] = (g[4:] - 2.0 * g[3:-1] + 2.0 * g[1:-3] - g[:-4]) / (2.0 * h3)
        out[0] = (-g[0] + 3.0 * g[1] - 3.0 * g[2] + g[3]) / h3
        out[1] = (-g[1] + 3.0 * g[2] - 3.0 * g[3] + g[4]) / h3
        out[-2] = (g[-2] - 3.0 * g[-3] + 3.0 * g[-4] - g[-5]) / h3
        out[-1] = (g[-1] - 3.0 * g[-2] + 3.0 * g[-3] - g[-4]) / h3
    else:  # pragma: no cover
        raise ValueError("derivative order must be 1, 2 or 3")
    return out if axis == 0 else np.moveaxis(out, 0, axis)


def _multi_indices(dim: int, order: int):
    for beta in product(range(order + 1), repeat=dim):
        if sum(beta) == order:
            yield beta


def sobolev_norms_upto(grid: Grid, f: np.ndarray, k: int) -> np.ndarray:
    """Discrete Sobolev norms ||f||_0 .. ||f||_k, cumulative over derivative order.

    ||f||_k^2 sums the weighted squares of all mixed differences of total order
    at most k. Face nodes use one-sided stencils, so these norms are monitors,
    not part of the conservative dynamics.
    """
    if k < 0 or k > 3:
        raise ValueError(f"derivative order k must be in 0..3, got {k}")
    if any(m < k + 2 for m in grid.n):
        raise ValueError(f"need at least {k + 2} nodes per axis for k={k}")
    if f.shape == grid.shape:
        components = f[None]
    elif f.shape == (grid.dim,) + grid.shape:
        components = f
    else:
        raise ValueError(f"field shape {f.shape} does not match grid {grid.shape}")

    sq = np.zeros(k + 1)
    for comp in components:
        sq[0] += grid.inner(comp, comp)
        for order in range(1, k + 1):
            for beta in _multi_indices(grid.dim, order):
                g = comp
                for axis in range(grid.dim):
                    if beta[axis] > 0:
                        g = _axis_derivative(g, axis, grid.h[axis], beta[axis])
                sq[order] += grid.inner(g, g)
    return np.sqrt(np.maximum(np.cumsum(sq), 0.0))


def sobolev_norm(grid: Grid, f: np.ndarray, k: int) -> float:
    """Discrete H^k norm of a scalar or vector field."""
    return float(sobolev_norms_upto(grid, f, k)[k])
