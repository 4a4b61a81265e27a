"""Verification of the quadrature-domain identities for extracted masks.

A domain Q for the weight w must carry the same mass and centroid as w, at
least as much moment of inertia, and a potential certificate: with
phi = 1_Q - w, the potential N(phi) is <= 0 everywhere and = 0 off Q.  All
four checks are computed directly on the grid; tolerances scale with h and
appear in the emitted report next to the measured values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import ndimage

from . import greens
from .field import DomainMask, ScalarField, WeightSpec, integrate, moments, rasterize_weight
from .obstacle import SolveParams, apriori_radius, extract_domain, solve_obstacle, weight_grid


class GridMismatchError(ValueError):
    """Inputs that must share a lattice do not."""


def potential_tolerance(h: float, w_max: float, dim: int) -> float:
    """20 h^2 max(1, max w) (1 + log(1/h) in d=2): the Nphi smallness budget."""
    log_factor = 1.0 + math.log(1.0 / h) if dim == 2 else 1.0
    return 20.0 * h * h * max(1.0, w_max) * log_factor


@dataclass(frozen=True)
class VerificationReport:
    measure_error: float
    centroid_error: float
    inertia_slack: float
    green_max: float
    green_outside_max: float
    tolerances: dict
    passes: dict

    def all_pass(self) -> bool:
        return all(self.passes.values())

    def to_dict(self) -> dict:
        return {
            "measure_error": self.measure_error,
            "centroid_error": self.centroid_error,
            "inertia_slack": self.inertia_slack,
            "green_max": self.green_max,
            "green_outside_max": self.green_outside_max,
            "tolerances": dict(self.tolerances),
            "passes": dict(self.passes),
        }


def verify_identities(Q: DomainMask, w: ScalarField,
                      measure_rtol: float = 0.02,
                      centroid_tol_cells: float = 2.0,
                      inertia_tol: float = 1e-8) -> dict:
    """Mass, centroid, and moment-of-inertia comparison between Q and w."""
    if not Q.grid.same_lattice(w.grid):
        raise GridMismatchError("mask and weight live on different grids")
    total_w = integrate(w)
    if total_w <= 0:
        raise ValueError("weight has zero total mass")
    mq = moments(Q)
    mw = moments(w)
    h = w.grid.spacing
    measure_error = abs(mq.measure - total_w)
    centroid_error = float(
        np.linalg.norm(np.subtract(mq.centroid, mw.centroid))
    )
    inertia_slack = mq.second_moment - mw.second_moment
    return {
        "measure_error": measure_error,
        "measure_tol": measure_rtol * total_w,
        "centroid_error": centroid_error,
        "centroid_tol": centroid_tol_cells * h,
        "inertia_slack": inertia_slack,
        "inertia_tol": inertia_tol,
        "measure_pass": measure_error <= measure_rtol * total_w,
        "centroid_pass": centroid_error <= centroid_tol_cells * h,
        "inertia_pass": inertia_slack >= -inertia_tol,
    }


class PotentialTestResult(NamedTuple):
    phi: ScalarField
    n_phi: ScalarField
    max_everywhere: float
    max_outside: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_everywhere <= self.tol and self.max_outside <= self.tol


def potential_test(Q: DomainMask, w: ScalarField) -> PotentialTestResult:
    """Sign certificate: N(1_Q - w) <= tol everywhere, |N(1_Q - w)| <= tol off Q.

    "Off Q" means exterior cells at distance >= 2h from Q.
    """
    if not Q.grid.same_lattice(w.grid):
        raise GridMismatchError("mask and weight live on different grids")
    g = w.grid
    phi = ScalarField(g, Q.inside.astype(float) - w.values)
    n_phi = greens.newtonian_potential(phi)
    dist = ndimage.distance_transform_edt(~Q.inside, sampling=g.spacing)
    exterior = dist >= 2.0 * g.spacing
    max_everywhere = float(n_phi.values.max())
    max_outside = float(np.abs(n_phi.values[exterior]).max()) if np.any(exterior) else 0.0
    tol = potential_tolerance(g.spacing, float(w.values.max()), g.dim)
    return PotentialTestResult(phi, ScalarField(g, n_phi.values), max_everywhere,
                               max_outside, tol)


def green_inequality_sample(Q: DomainMask, w: ScalarField, points: Sequence) -> np.ndarray:
    """v(x) = sum_Q G_x h^d - sum G_x w h^d at each sample point (= Nphi(x)).

    Direct per-point kernel sums with the same cell regularization as the
    fast convolution, so at a cell center the value reproduces the
    potential_test field to roundoff.
    """
    if not Q.grid.same_lattice(w.grid):
        raise GridMismatchError("mask and weight live on different grids")
    g = w.grid
    centers = np.stack([c.ravel() for c in g.centers()], axis=-1)
    phi = (Q.inside.astype(float) - w.values).ravel()
    k0 = greens.singular_cell_value(g.dim, g.spacing)
    out = np.empty(len(points))
    for i, p in enumerate(points):
        pv = np.atleast_1d(np.asarray(p, dtype=float))
        r = np.linalg.norm(centers - pv, axis=-1)
        rsafe = np.where(r == 0.0, 1.0, r)
        kval = np.asarray(greens.kernel_radial(g.dim, rsafe))
        kval = np.where(r == 0.0, k0, kval)
        out[i] = g.cell_volume * float(kval @ phi)
    return out


def default_sample_points(Q: DomainMask) -> list[np.ndarray]:
    """Deterministic probes: domain centroid, 8 near-exterior, 8 far-field points.

    Near-exterior points sit 3h outside the mask along coordinate-plane
    directions; far-field points sit on the largest safe sphere around the
    centroid.  1D uses the two available directions.
    """
    g = Q.grid
    m = moments(Q)
    centroid = np.asarray(m.centroid)
    inside = Q.inside
    dist_out = ndimage.distance_transform_edt(~inside, sampling=g.spacing)
    pts = [centroid]
    if g.dim == 1:
        dirs = [np.array([1.0]), np.array([-1.0])]
    elif g.dim == 2:
        ang = np.arange(8) * (2.0 * math.pi / 8.0)
        dirs = [np.array([math.cos(a), math.sin(a)]) for a in ang]
    else:
        dirs = [np.array(v, dtype=float) for v in
                [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1),
                 (1, 1, 1), (-1, -1, -1)]]
        dirs = [v / np.linalg.norm(v) for v in dirs]
    bounds = g.bounds()
    safe = min(min(centroid[a] - bounds[a][0], bounds[a][1] - centroid[a])
               for a in range(g.dim)) - 2.5 * g.spacing
    centers = np.stack(g.centers(), axis=-1)
    for d in dirs:
        # walk outward until 3h clear of the mask
        step = g.spacing
        t = step
        probe = centroid + t * d
        while t < safe:
            probe = centroid + t * d
            idx = tuple(
                int(np.clip((probe[a] - g.origin[a]) / g.spacing - 0.5, 0, g.shape[a] - 1))
                for a in range(g.dim)
            )
            if not inside[idx] and dist_out[idx] >= 3.0 * g.spacing:
                break
            t += step
        pts.append(probe)
    for d in dirs:
        pts.append(centroid + safe * d)
    return pts


class MonotonicityResult(NamedTuple):
    escape_measure: float
    band_budget: float
    Q_small: DomainMask
    Q_large: DomainMask

    @property
    def passed(self) -> bool:
        return self.escape_measure <= self.band_budget


def monotonicity_check(w_spec: WeightSpec, w_prime_spec: WeightSpec, dim: int, h: float,
                       params: SolveParams | None = None) -> MonotonicityResult:
    """Solve both weights on a common grid; Q_w must sit in Q_w' up to a band.

    The escape measure lambda(Q_w \\ Q_w') is budgeted by 4h times the
    boundary-cell perimeter estimate of Q_w.
    """
    params = params or SolveParams(relaxation=None)
    margin = params.margin_cells * h
    box_a = apriori_radius(w_spec, dim, margin=margin)
    box_b = apriori_radius(w_prime_spec, dim, margin=margin)
    half = max(
        max(abs(lo - c), abs(hi - c))
        for bx in (box_a, box_b)
        for (lo, hi), c in zip(bx.box, box_a.center)
    )
    n = int(math.ceil(2.0 * half / h))
    from .field import Grid

    grid = Grid(dim=dim, origin=tuple(c - n * h / 2.0 for c in box_a.center),
                spacing=h, shape=(n,) * dim)
    w = rasterize_weight(w_spec, grid)
    w_prime = rasterize_weight(w_prime_spec, grid)
    if np.any(w.values > w_prime.values + 1e-12):
        raise ValueError("weights are not ordered: w <= w' fails on the grid")
    sol = solve_obstacle(w, params)
    sol_p = solve_obstacle(w_prime, params)
    Q = extract_domain(sol, w)
    Q_p = extract_domain(sol_p, w_prime)
    escape = grid.cell_volume * float(np.count_nonzero(Q.inside & ~Q_p.inside))
    budget = 4.0 * h * Q.perimeter_estimate()
    return MonotonicityResult(escape, budget, Q, Q_p)


def build_report(Q: DomainMask, w: ScalarField) -> VerificationReport:
    """Full verification: identities plus the potential certificate."""
    ids = verify_identities(Q, w)
    pot = potential_test(Q, w)
    tolerances = {
        "measure": ids["measure_tol"],
        "centroid": ids["centroid_tol"],
        "inertia": ids["inertia_tol"],
        "green": pot.tol,
    }
    passes = {
        "measure": ids["measure_pass"],
        "centroid": ids["centroid_pass"],
        "inertia": ids["inertia_pass"],
        "green_sign": pot.max_everywhere <= pot.tol,
        "green_outside": pot.max_outside <= pot.tol,
    }
    return VerificationReport(
        measure_error=ids["measure_error"],
        centroid_error=ids["centroid_error"],
        inertia_slack=ids["inertia_slack"],
        green_max=pot.max_everywhere,
        green_outside_max=pot.max_outside,
        tolerances=tolerances,
        passes=passes,
    )
