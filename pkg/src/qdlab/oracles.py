"""Independent reference solutions for the complementarity solve.

Two families:

* radially symmetric weights c * 1_{B_R}: the solution is the superposition
  N[1_{B_R'} - c 1_{B_R}] with R' = c^(1/d) R, assembled from the closed-form
  ball potential (no grids involved);

* 1D piecewise-constant weights: a dense-grid active-set solve built on exact
  tridiagonal factorizations -- a genuinely different algorithm from the
  projected relaxation used by the obstacle module, so the two can
  cross-check each other.

Also provides admissible comparison functions ("witnesses") used by the
maximality test of the obstacle solver: nonpositive grid functions g with
Delta_h g >= w - 1, which the solved f must dominate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import solve_banded

from .field import Grid, ScalarField
from .greens import ball_potential_radial, ball_potential_radial_derivative
from .obstacle import _interior_neighbor_sum


class ActiveSetCyclingError(RuntimeError):
    """Active-set iteration revisited a previous set (should not happen: M-matrix)."""


@dataclass(frozen=True)
class RadialSolution:
    """f(r) = N[1_{B_R'} - c 1_{B_R}](r) about a given center."""

    c: float
    R: float
    dim: int
    R_prime: float
    center: tuple[float, ...]

    def profile(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        outer = ball_potential_radial(self.R_prime, self.dim, r)
        inner = ball_potential_radial(self.R, self.dim, r)
        vals = outer - self.c * inner
        # beyond R' the two terms cancel exactly in the continuum; pin the
        # roundoff dust to zero so sign checks are exact
        return np.where(r >= self.R_prime, 0.0, vals)

    def profile_derivative(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        outer = ball_potential_radial_derivative(self.R_prime, self.dim, r)
        inner = ball_potential_radial_derivative(self.R, self.dim, r)
        return np.where(r >= self.R_prime, 0.0, outer - self.c * inner)

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        r = np.linalg.norm(pts - np.asarray(self.center), axis=-1)
        return self.profile(r)


def radial_solution(c: float, R: float, dim: int, center=None) -> RadialSolution:
    """Analytic maximizer profile for w = c * 1_{B_R}.

    Asserts the admissibility direction numerically: f <= 0 on [0, R'] and
    f = 0 beyond (the paper-trail sign check).
    """
    if c < 1.0:
        raise ValueError("amplitude c must be >= 1")
    if R <= 0:
        raise ValueError("R must be positive")
    if center is None:
        center = (0.0,) * dim
    sol = RadialSolution(c=c, R=R, dim=dim, R_prime=c ** (1.0 / dim) * R,
                         center=tuple(float(x) for x in np.atleast_1d(center)))
    rr = np.linspace(0.0, sol.R_prime * 1.5, 2001)
    vals = sol.profile(rr)
    if vals.max() > 1e-10:
        raise AssertionError("radial oracle profile is not nonpositive")
    if np.abs(vals[rr >= sol.R_prime]).max() > 1e-10:
        raise AssertionError("radial oracle profile does not vanish beyond R'")
    return sol


@dataclass(frozen=True)
class Interval1DSolution:
    """Maximal intervals of {f < 0} merged with {w >= 1}, plus the dense profile."""

    intervals: tuple[tuple[float, float], ...]
    grid: Grid
    f: np.ndarray
    w: np.ndarray

    @property
    def total_length(self) -> float:
        return sum(b - a for a, b in self.intervals)

    def f_at(self, x: float) -> float:
        xs = self.grid.axis_centers(0)
        return float(np.interp(x, xs, self.f))


def _solve_on_active(active: np.ndarray, rhs: np.ndarray, h2: float) -> np.ndarray:
    """Solve f'' = rhs/h^2 on each active run with f = 0 at run ends (tridiagonal)."""
    f = np.zeros(active.size)
    idx = np.flatnonzero(active)
    if idx.size == 0:
        return f
    # split into maximal runs of consecutive indices
    breaks = np.flatnonzero(np.diff(idx) > 1)
    runs = np.split(idx, breaks + 1)
    for run in runs:
        n = run.size
        ab = np.zeros((3, n))
        ab[0, 1:] = 1.0
        ab[1, :] = -2.0
        ab[2, :-1] = 1.0
        f[run] = solve_banded((1, 1), ab, rhs[run])
    return f


def exact_1d(pieces: Sequence[tuple[float, float, float]], h: float | None = None,
             margin_factor: float = 1.25) -> Interval1DSolution:
    """Dense-grid active-set solve of the 1D complementarity problem.

    pieces: (a, b, amplitude) with amplitude >= 1 describing
    w = sum amp * 1_{(a,b)}.  The grid spacing defaults to 1e-4 times the
    support width.  Active-set (policy) iteration on exact tridiagonal
    factorizations: finitely convergent for M-matrices; cycling is detected
    defensively.  Because the set grows by at most one cell layer per
    iteration, fine grids are seeded from a recursive 8x-coarser solve.
    """
    if not pieces:
        raise ValueError("weight must have at least one piece")
    for a, b, amp in pieces:
        if b <= a:
            raise ValueError("piece endpoints must satisfy a < b")
        if amp < 1.0:
            raise ValueError("piece amplitude must be >= 1 (properly supported)")
    lo = min(a for a, _, _ in pieces)
    hi = max(b for _, b, _ in pieces)
    width = hi - lo
    center = (lo + hi) / 2.0
    events = sorted({e for a, b, _ in pieces for e in (a, b)})
    mids = [(u + v) / 2.0 for u, v in zip(events[:-1], events[1:])]
    c = max(1.0, max(sum(amp for a, b, amp in pieces if a < x < b) for x in mids))
    R_prime = c * width / 2.0
    half = R_prime * margin_factor
    if h is None:
        h = 1e-4 * width
    n = int(np.ceil(2 * half / h))
    grid = Grid(dim=1, origin=(center - half,), spacing=h, shape=(n,))
    x = grid.axis_centers(0)
    w = np.zeros(n)
    for a, b, amp in pieces:
        w += amp * ((x > a) & (x < b))

    seed_intervals: tuple[tuple[float, float], ...] = ()
    if n > 3000:
        coarse = exact_1d(pieces, h=8.0 * h, margin_factor=margin_factor)
        shrink = 2.0 * coarse.grid.spacing
        seed_intervals = tuple(
            (a + shrink, b - shrink) for a, b in coarse.intervals if b - a > 2 * shrink
        )

    h2 = h * h
    rhs = h2 * (w - 1.0)  # f'' h^2 target on active cells
    interior = np.zeros(n, dtype=bool)
    interior[1:-1] = True

    active = (w > 1.0) & interior
    for a, b in seed_intervals:
        active |= interior & (x > a) & (x < b)
    seen = set()
    f = np.zeros(n)
    settled = False
    max_iter = n + 100
    for _ in range(max_iter):
        key = active.tobytes()
        if key in seen:
            raise ActiveSetCyclingError("active-set iteration cycled")
        seen.add(key)
        f = _solve_on_active(active, rhs, h2)
        lap = np.zeros(n)
        lap[1:-1] = f[:-2] - 2.0 * f[1:-1] + f[2:]
        violated = interior & ~active & (lap < rhs - 1e-14)
        release = active & (f > 0.0)
        new_active = (active | violated) & ~release
        if np.array_equal(new_active, active):
            settled = True
            break
        active = new_active
    if not settled:
        raise ActiveSetCyclingError("active-set iteration did not settle")
    f = np.minimum(f, 0.0)

    member = (f < -1e-12) | (w >= 1.0)
    intervals: list[tuple[float, float]] = []
    idx = np.flatnonzero(member)
    if idx.size:
        breaks = np.flatnonzero(np.diff(idx) > 1)
        for run in np.split(idx, breaks + 1):
            intervals.append((x[run[0]] - h / 2.0, x[run[-1]] + h / 2.0))
    return Interval1DSolution(intervals=tuple(intervals), grid=grid, f=f, w=w)


def admissible_witness(c: float, R: float, dim: int, grid: Grid, center=None) -> ScalarField:
    """Rasterized analytic witness N[1_{B_R'} - c 1_{B_R}]: <= 0, zero outside B_R'.

    Discretely its Laplacian satisfies Delta_h g >= w - 1 only up to O(h)
    violations in cells whose stencil straddles the two circles; use
    discrete_admissible_witness for a cellwise-exact comparison function.
    """
    sol = radial_solution(c, R, dim, center=center)
    pts = np.stack(grid.centers(), axis=-1)
    vals = sol(pts.reshape(-1, dim)).reshape(grid.shape)
    return ScalarField(grid, np.minimum(vals, 0.0))


def discrete_admissible_witness(w: ScalarField, c: float, R: float, dim: int,
                                center=None, pad_cells: float = 2.5) -> ScalarField:
    """A witness g <= 0 with Delta_h g >= w - 1 at every interior cell, exactly.

    Built from the analytic profile with the inner ball padded by pad_cells*h
    (so cells carrying w = c keep their stencils inside the quadratic piece),
    then lowered by a quadratic correction with exact discrete Laplacian equal
    to the measured admissibility violation.
    """
    g = w.grid
    h = g.spacing
    R_pad = R + pad_cells * h
    base = admissible_witness(c, R_pad, dim, g, center=center)
    core = tuple(slice(1, -1) for _ in range(dim))
    lap = np.zeros(g.shape)
    lap[core] = (_interior_neighbor_sum(base.values, dim)
                 - 2.0 * dim * base.values[core]) / h**2
    violation = (w.values - 1.0) - lap
    violation[~np.isfinite(violation)] = 0.0
    v = max(0.0, float(violation[core].max()))
    if v == 0.0:
        return base
    centers = g.centers()
    if center is None:
        center = tuple((b[0] + b[1]) / 2.0 for b in g.bounds())
    r2 = sum((cn - cc) ** 2 for cn, cc in zip(centers, center))
    r2_max = max(
        sum((edge - cc) ** 2 for edge, cc in zip(corner, center))
        for corner in np.array(np.meshgrid(*[b for b in g.bounds()], indexing="ij"))
        .reshape(dim, -1).T
    )
    correction = (v / (2.0 * dim)) * (r2_max - r2)  # Delta_h == -v exactly (quadratic)
    return ScalarField(g, base.values - correction)
