"""Spherical and ball averages, the annulus comparison kernel, and zero-set checks.

The central objects:

* L_f(x; r): equal-weight average of f over the sphere of radius r around x
  (two points in 1D, uniform angles in 2D, a Fibonacci lattice in 3D);
* A_f(x; s): average over the ball, either by direct cell sums or by the
  radial reconstruction A_f(x; s) = int_0^s (d r^(d-1) / s^d) L_f(x; r) dr;
* the comparison kernel k_{s,t,x}(y) = int_{|y-x|}^inf (W(r/t) - W(r/s))
  / (C_d r^(d-1)) dr with W(r) = min(1, r^d), whose total mass is
  (s^2 - t^2) / (2(d+2)) and which converts differences of ball averages
  into integrals against the distributional Laplacian:
  int k dnu = A_f(x; s) - A_f(x; t) when lap(f dlambda) = dnu.

For potentials the sign convention is fixed here once: lap(N rho) = -rho,
so nu = -rho lambda in the difference identity.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np
from scipy import integrate as sp_integrate

from . import greens
from .field import DomainMask, ScalarField, interpolate_linear

unit_sphere_area = greens.unit_sphere_area


def sphere_points(dim: int, M: int) -> np.ndarray:
    """Deterministic equal-weight unit-sphere sample: (M, dim) array.

    1D: the two points {-1, +1} (M ignored); 2D: M uniform angles;
    3D: golden-angle Fibonacci lattice with M points (seedless).
    """
    if dim == 1:
        return np.array([[-1.0], [1.0]])
    if dim == 2:
        ang = (np.arange(M) + 0.5) * (2.0 * math.pi / M)
        return np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    k = np.arange(M)
    z = 1.0 - (2.0 * k + 1.0) / M
    phi = k * math.pi * (3.0 - math.sqrt(5.0))
    rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)


def _require_ball_inside(f: ScalarField, x, r: float) -> np.ndarray:
    g = f.grid
    xv = np.atleast_1d(np.asarray(x, dtype=float))
    bounds = g.bounds()
    for a in range(g.dim):
        if xv[a] - r < bounds[a][0] + 0.5 * g.spacing or xv[a] + r > bounds[a][1] - 0.5 * g.spacing:
            raise ValueError(f"ball of radius {r} around {tuple(xv)} leaves the grid")
    return xv


def sphere_average(f: ScalarField, x, r: float, M: int = 256) -> float:
    """L_f(x; r) by equal-weight sampling with multilinear interpolation."""
    if r <= 0:
        raise ValueError("radius must be positive")
    xv = _require_ball_inside(f, x, r)
    pts = xv + r * sphere_points(f.grid.dim, M)
    return float(np.mean(interpolate_linear(f, pts)))


def ball_average(f: ScalarField, x, s: float) -> float:
    """A_f(x; s) as the plain average over cells whose center lies in B_s(x)."""
    if s <= 0:
        raise ValueError("radius must be positive")
    xv = _require_ball_inside(f, x, s)
    g = f.grid
    lo = [max(0, int((xv[a] - s - g.origin[a]) / g.spacing) - 1) for a in range(g.dim)]
    hi = [min(g.shape[a], int((xv[a] + s - g.origin[a]) / g.spacing) + 2) for a in range(g.dim)]
    block = tuple(slice(l, u) for l, u in zip(lo, hi))
    sub_axes = [g.axis_centers(a)[block[a]] for a in range(g.dim)]
    mesh = np.meshgrid(*sub_axes, indexing="ij")
    r2 = sum((m - xv[a]) ** 2 for a, m in enumerate(mesh))
    member = r2 < s * s
    count = int(np.count_nonzero(member))
    if count == 0:
        raise ValueError("ball contains no cell centers; radius below grid scale")
    return float(np.sum(f.values[block][member]) / count)


def radial_reconstruction(f: ScalarField, x, s: float, n_r: int = 128, M: int = 256) -> float:
    """A_f(x; s) via the layer-cake formula int_0^s d r^(d-1)/s^d L_f(x; r) dr.

    Composite midpoint rule in r over n_r nodes; independent of the direct
    cell-sum path, so the two cross-check each other.
    """
    if s <= 0:
        raise ValueError("radius must be positive")
    _require_ball_inside(f, x, s)
    d = f.grid.dim
    dr = s / n_r
    total = 0.0
    for i in range(n_r):
        r = (i + 0.5) * dr
        total += d * r ** (d - 1) / s**d * sphere_average(f, x, r, M) * dr
    return float(total)


def _power_integral(dim: int, a: float, b: float) -> float:
    """int_a^b rho^(1-d) drho for the kernel tail, dimension by dimension."""
    if dim == 1:
        return b - a
    if dim == 2:
        return math.log(b / a)
    return 1.0 / a - 1.0 / b


def comparison_kernel_value(s: float, t: float, dim: int, r) -> np.ndarray:
    """Closed-form k_{s,t}(r): the integrand is piecewise power-law.

    For rho < t the integrand is rho (1/t^d - 1/s^d) / C_d; for t <= rho < s
    it is (rho^(1-d) - rho/s^d) / C_d; it vanishes beyond s.
    """
    if not 0.0 < t < s:
        raise ValueError("radii must satisfy 0 < t < s")
    if dim not in (1, 2, 3):
        raise ValueError("dim must be 1, 2, or 3")
    c_d = unit_sphere_area(dim)
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("r must be >= 0")
    out = np.zeros_like(r)

    mid = (r >= t) & (r < s)
    if np.any(mid):
        b = r[mid]
        if dim == 1:
            tail = (s - b)
        elif dim == 2:
            tail = np.log(s / b)
        else:
            tail = 1.0 / b - 1.0 / s
        out[mid] = (tail - (s**2 - b**2) / (2.0 * s**dim)) / c_d

    low = r < t
    if np.any(low):
        b = r[low]
        inner = (t**2 - b**2) / 2.0 * (1.0 / t**dim - 1.0 / s**dim)
        outer = _power_integral(dim, t, s) - (s**2 - t**2) / (2.0 * s**dim)
        out[low] = (inner + outer) / c_d
    return out


def comparison_kernel_mass(s: float, t: float, dim: int) -> float:
    """Closed-form total mass (s^2 - t^2) / (2 (d + 2))."""
    if not 0.0 < t < s:
        raise ValueError("radii must satisfy 0 < t < s")
    return (s**2 - t**2) / (2.0 * (dim + 2))


def comparison_kernel_mass_numeric(s: float, t: float, dim: int) -> float:
    """Radial quadrature of the kernel mass, piecewise over the two kinks."""
    c_d = unit_sphere_area(dim)

    def shell(r):
        return comparison_kernel_value(s, t, dim, np.asarray([r]))[0] * c_d * r ** (dim - 1)

    total = 0.0
    for a, b in ((0.0, t), (t, s)):
        val, _ = sp_integrate.quad(shell, a, b, epsabs=1e-13, epsrel=1e-12, limit=200)
        total += val
    return total


class DifferenceIdentity(NamedTuple):
    lhs: float
    rhs: float
    gap: float
    scale: float


def difference_identity_check(rho: ScalarField, x, s: float, t: float,
                              n_r: int = 256, M: int = 512) -> DifferenceIdentity:
    """Check int k_{s,t,x} dnu = A_f(x;s) - A_f(x;t) for f = N rho, nu = -rho lambda.

    lhs: lattice sum of k * (-rho) * h^d.  rhs: difference of ball averages of
    the computed potential, evaluated through the radial reconstruction (the
    direct cell-sum average carries lattice-count noise above this identity's
    tolerance; the two average paths are cross-validated separately).
    scale: the natural magnitude (s^2-t^2)/(2(d+2)) * max|rho| + h.
    """
    g = rho.grid
    if not 0.0 < t < s:
        raise ValueError("radii must satisfy 0 < t < s")
    xv = np.atleast_1d(np.asarray(x, dtype=float))
    centers = np.stack(g.centers(), axis=-1)
    r = np.linalg.norm(centers - xv, axis=-1)
    k = comparison_kernel_value(s, t, g.dim, r.ravel()).reshape(g.shape)
    lhs = g.cell_volume * float(np.sum(k * (-rho.values)))
    f = greens.newtonian_potential(rho)
    rhs = radial_reconstruction(f, xv, s, n_r, M) - radial_reconstruction(f, xv, t, n_r, M)
    scale = comparison_kernel_mass(s, t, g.dim) * float(np.abs(rho.values).max()) + g.spacing
    return DifferenceIdentity(lhs, rhs, abs(lhs - rhs), scale)


def quadratic_zero_bound_check(f: ScalarField, C: float, zeros: Sequence,
                               min_separation_cells: float = 8.0,
                               zero_tol: float = 1e-8) -> float:
    """Max over zeros x and probes y of f(y) / (2^d C |y - x|^2).

    Applies to f >= 0 with |lap f| <= C: the bound is <= 1 in the continuum,
    and <= 2 is asserted for probes with |y - x| >= 8h.  Probes are all grid
    cells within half the distance from x to the grid boundary.  Listed
    points must actually be zeros of f (|f| <= zero_tol there).
    """
    g = f.grid
    h = g.spacing
    centers = np.stack(g.centers(), axis=-1)
    bounds = g.bounds()
    worst = 0.0
    for x in zeros:
        xv = np.atleast_1d(np.asarray(x, dtype=float))
        fx = float(interpolate_linear(f, xv[None, :])[0])
        if abs(fx) > zero_tol:
            raise ValueError(f"listed point {tuple(xv)} is not a zero: f = {fx}")
        boundary_dist = min(
            min(xv[a] - bounds[a][0], bounds[a][1] - xv[a]) for a in range(g.dim)
        )
        r = np.linalg.norm(centers - xv, axis=-1)
        probe = (r >= min_separation_cells * h) & (r <= 0.5 * boundary_dist)
        if not np.any(probe):
            continue
        ratio = f.values[probe] / (2.0**g.dim * C * r[probe] ** 2)
        worst = max(worst, float(ratio.max()))
    return worst


def zero_set_laplacian_check(f: ScalarField, rho: ScalarField, tau: float = 1e-10) -> float:
    """Max |rho| over cells where f vanishes together with its 2-cell neighborhood.

    The continuum statement is rho = 0 a.e. on {f = 0}; on the grid the
    contract is max |rho| <= 10 h max|rho| over the deep zero set.
    """
    from scipy import ndimage

    g = f.grid
    zero = np.abs(f.values) <= tau
    structure = np.ones((3,) * g.dim, dtype=bool)
    deep = ndimage.binary_erosion(zero, structure=structure, iterations=2, border_value=1)
    if not np.any(deep):
        return 0.0
    return float(np.abs(rho.values[deep]).max())
