"""Unrestricted Green kernels and Newtonian potentials on the lattice.

The free-space kernel of -laplacian is

    d=1:  -|x-y| / 2
    d=2:  -log|x-y| / (2 pi)
    d=3:  |x-y|^(-1) / (4 pi)

and the potential of a bounded compactly supported w is the convolution
Nw = G * w, so -lap Nw = w.  On the grid the convolution is a plain lattice
sum h^d * sum_j K(x_i - x_j) w_j with the zero-offset kernel value replaced by
the exact average of G over the ball of volume h^d (equivalent-ball rule);
this preserves the local mean of the kernel and keeps the ball-potential spot
checks first-order accurate.

The fast path evaluates the same sums exactly (to FFT roundoff) via
zero-padded convolution; a naive O(n^2) oracle is kept for cross-checks.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .field import Grid, ScalarField


class SingularityError(ValueError):
    """Kernel requested at coincident points outside any grid context."""


class GridTooLargeError(ValueError):
    """Direct O(n^2) oracle refused: grid exceeds the oracle scale."""


def unit_sphere_area(dim: int) -> float:
    """Area of the unit sphere in R^d: 2 pi^(d/2) / Gamma(d/2)."""
    if dim not in (1, 2, 3):
        raise ValueError("dim must be 1, 2, or 3")
    return 2.0 * math.pi ** (dim / 2.0) / math.gamma(dim / 2.0)


def kernel_radial(dim: int, r) -> np.ndarray:
    """G as a function of the separation r > 0."""
    r = np.asarray(r, dtype=float)
    if dim == 1:
        return -0.5 * r
    if dim == 2:
        return -np.log(r) / (2.0 * math.pi)
    return 1.0 / (4.0 * math.pi * r)


def green_kernel(dim: int, x, y) -> float:
    """Pointwise kernel G(x, y).  Coincident points are a singularity for d >= 2."""
    xv = np.atleast_1d(np.asarray(x, dtype=float))
    yv = np.atleast_1d(np.asarray(y, dtype=float))
    r = float(np.linalg.norm(xv - yv))
    if r == 0.0:
        if dim == 1:
            return 0.0
        raise SingularityError("green_kernel at coincident points (d >= 2)")
    return float(kernel_radial(dim, r))


def singular_cell_value(dim: int, h: float) -> float:
    """Exact mean of G over the ball of volume h^d centered at the origin.

    d=1: -h/8;  d=2: (log(1/r_e) + 1/2) / (2 pi) with r_e = h/sqrt(pi);
    d=3: 3/(8 pi r_e) with r_e = (3 h^3 / 4 pi)^(1/3).
    """
    if dim == 1:
        return -h / 8.0
    if dim == 2:
        r_e = h / math.sqrt(math.pi)
        return (math.log(1.0 / r_e) + 0.5) / (2.0 * math.pi)
    r_e = (3.0 * h**3 / (4.0 * math.pi)) ** (1.0 / 3.0)
    return 3.0 / (8.0 * math.pi * r_e)


def _offset_radii(grid: Grid) -> np.ndarray:
    axes = [np.arange(-(n - 1), n) * grid.spacing for n in grid.shape]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.sqrt(sum(m**2 for m in mesh)), mesh


_KERNEL_CACHE: dict = {}
_CACHE_LOCK = threading.Lock()


def kernel_block(grid: Grid, component: int | None = None) -> np.ndarray:
    """Kernel evaluated on all cell offsets (shape 2n-1 per axis), cached.

    component=None gives G itself; component=a gives dG/dx_a (zero at the
    origin by symmetry).  Cache is build-once / read-many.
    """
    key = (grid.dim, grid.shape, float(grid.spacing), component)
    with _CACHE_LOCK:
        cached = _KERNEL_CACHE.get(key)
    if cached is not None:
        return cached
    r, mesh = _offset_radii(grid)
    center = tuple(n - 1 for n in grid.shape)
    if component is None:
        rsafe = r.copy()
        rsafe[center] = 1.0
        block = np.asarray(kernel_radial(grid.dim, rsafe))
        block[center] = singular_cell_value(grid.dim, grid.spacing)
    else:
        c_d = unit_sphere_area(grid.dim)
        rsafe = r.copy()
        rsafe[center] = 1.0
        block = -(mesh[component] / rsafe**grid.dim) / c_d
        block[center] = 0.0
    block.flags.writeable = False
    with _CACHE_LOCK:
        _KERNEL_CACHE[key] = block
    return block


@dataclass(frozen=True)
class PotentialField(ScalarField):
    """A ScalarField that remembers where it came from."""

    source_description: str = ""


def _convolve(values: np.ndarray, block: np.ndarray) -> np.ndarray:
    return fftconvolve(values, block, mode="valid")


def newtonian_potential(w: ScalarField) -> PotentialField:
    """Nw on the grid of w: lattice convolution with the regularized kernel."""
    block = kernel_block(w.grid)
    vals = _convolve(w.values, block) * w.grid.cell_volume
    return PotentialField(w.grid, vals, source_description="newtonian_potential")


def newtonian_potential_const_outside(w: ScalarField, c: float) -> PotentialField:
    """Potential of a weight equal to the constant c outside a compact set.

    Returns N(w - c) + (c / 2d) |x|^2, whose (distributional) Laplacian is -w.
    """
    if c < 0:
        raise ValueError("background constant c must be >= 0")
    g = w.grid
    diff = ScalarField(g, w.values - c)
    base = newtonian_potential(diff)
    r2 = sum(x**2 for x in g.centers())
    vals = base.values + (c / (2.0 * g.dim)) * r2
    return PotentialField(g, vals, source_description=f"newtonian_potential_const_outside(c={c})")


def potential_gradient(w: ScalarField) -> list[ScalarField]:
    """Components of grad Nw by direct kernel-gradient convolution."""
    out = []
    for a in range(w.grid.dim):
        block = kernel_block(w.grid, component=a)
        vals = _convolve(w.values, block) * w.grid.cell_volume
        out.append(ScalarField(w.grid, vals))
    return out


def ball_volume(dim: int, R: float) -> float:
    return unit_sphere_area(dim) * R**dim / dim


def analytic_ball_potential(R: float, dim: int, x) -> float:
    """Closed-form N 1_{B_R}(x): G(x,0) * vol(B_R) outside, c1 - |x|^2/2d inside."""
    if R <= 0:
        raise ValueError("R must be positive")
    r = float(np.linalg.norm(np.atleast_1d(np.asarray(x, dtype=float))))
    return ball_potential_radial(R, dim, np.array([r]))[0]


def ball_potential_radial(R: float, dim: int, r) -> np.ndarray:
    """Radial profile of N 1_{B_R}; continuous, with c1 fixed by matching at r = R."""
    if R <= 0:
        raise ValueError("R must be positive")
    r = np.asarray(r, dtype=float)
    vol = ball_volume(dim, R)
    outside_at_R = float(kernel_radial(dim, np.array([R]))[0]) * vol
    c1 = outside_at_R + R**2 / (2.0 * dim)
    inside = c1 - r**2 / (2.0 * dim)
    rsafe = np.where(r == 0.0, 1.0, r)
    outside = np.asarray(kernel_radial(dim, rsafe)) * vol
    return np.where(r <= R, inside, outside)


def ball_potential_radial_derivative(R: float, dim: int, r) -> np.ndarray:
    """d/dr of the ball potential: -r/d inside, -R^d/(d r^(d-1)) outside."""
    r = np.asarray(r, dtype=float)
    rsafe = np.where(r == 0.0, 1.0, r)
    outside = -(R**dim) / (dim * rsafe ** (dim - 1))
    return np.where(r <= R, -r / dim, outside)


def direct_convolution_oracle(w: ScalarField, block_size: int = 512) -> PotentialField:
    """Same regularized kernel as newtonian_potential, summed naively.

    O(n^2) reference for the fast path; refuses grids above 1e5 cells.
    """
    g = w.grid
    n = g.n_cells
    if n > 100_000:
        raise GridTooLargeError(f"{n} cells exceeds the 1e5-cell oracle scale")
    centers = np.stack([c.ravel() for c in g.centers()], axis=-1)
    wflat = w.values.ravel()
    k0 = singular_cell_value(g.dim, g.spacing)
    out = np.empty(n)
    for start in range(0, n, block_size):
        stop = min(start + block_size, n)
        diff = centers[start:stop, None, :] - centers[None, :, :]
        r = np.sqrt(np.sum(diff**2, axis=-1))
        rsafe = np.where(r == 0.0, 1.0, r)
        kval = np.asarray(kernel_radial(g.dim, rsafe))
        kval = np.where(r == 0.0, k0, kval)
        out[start:stop] = kval @ wflat
    return PotentialField(g, out.reshape(g.shape) * g.cell_volume,
                          source_description="direct_convolution_oracle")


def discrete_laplacian(f: ScalarField) -> ScalarField:
    """Standard 3/5/7-point Laplacian divided by h^2; zero on the outer ring."""
    g = f.grid
    vals = f.values
    out = np.zeros_like(vals)
    core = tuple(slice(1, -1) for _ in range(g.dim))
    acc = -2.0 * g.dim * vals[core]
    for axis in range(g.dim):
        plus = list(core)
        minus = list(core)
        plus[axis] = slice(2, None)
        minus[axis] = slice(None, -2)
        acc = acc + vals[tuple(plus)] + vals[tuple(minus)]
    out[core] = acc / g.spacing**2
    return ScalarField(g, out)
