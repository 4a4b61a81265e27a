"""Cutoff machinery: slow-decay bumps, Whitney cubes, regularized distance,
depth cutoffs, and the log-Lipschitz modulus of potential gradients.

The guiding function is xi(t) = 1 / (t log(1/t)).  A depth cutoff built
through xi gains a factor 1/(j log(1/delta)) in its gradient bound over the
naive ramp min(1, j*delta); the construction chain is

    eta_m   -- a smooth bump on (0, 1/m) with unit mass under the envelope
               xi/m and derivative envelope xi/(m t);
    Delta_Q -- a smooth comparable of the distance-to-complement d(x, Q^c),
               assembled from a Whitney cube decomposition of Q;
    h_j     -- the cutoff H(Delta_Q(x)) with H the CDF of eta at support
               scale 1/(C j): equal to 1 at depth > 1/j, compactly supported
               in Q, with |grad h_j| <= xi(delta)/j.

Because int xi dt diverges only log-log slowly, the mass-1 constraint forces
the support of eta_m down to t with log log(1/t) ~ m, far below floating
point for m of interest.  The bump is therefore represented analytically in
el = log log(1/t) coordinates: with u = log(1/t), the transported profile
p(u) = t * eta(t) is bounded by 1/(m u), masses are integrals of p du =
(theta/m) S(el) del for a ramp/plateau profile S, and every invariant has a
scale-invariant ratio form that is evaluated exactly at any representable t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import ndimage

from .field import DomainMask, ScalarField, interpolate_linear


def xi(t: float) -> float:
    """1 / (t log(1/t)) on (0, 1); decreasing on (0, 1/e)."""
    if not 0.0 < t < 1.0:
        raise ValueError("xi is defined on (0, 1)")
    return 1.0 / (t * math.log(1.0 / t))


def _smoothstep(x):
    """Quintic smoothstep: 0 -> 1 on [0, 1] with vanishing first derivatives."""
    x = np.clip(x, 0.0, 1.0)
    return x**3 * (10.0 - 15.0 * x + 6.0 * x**2)


def _smoothstep_prime(x):
    x = np.clip(x, 0.0, 1.0)
    return 30.0 * x**2 * (x - 1.0) ** 2


def _smoothstep_integral(x):
    """int_0^x smoothstep; equals 1/2 at x = 1."""
    x = np.clip(x, 0.0, 1.0)
    return x**4 * (2.5 - 3.0 * x + x**2)


@dataclass(frozen=True)
class BumpFunction:
    """Smooth unit-mass bump on (0, 1/m) under the envelope xi/m.

    Profile in el = log(log(1/t)): quintic ramp up over [la, lb], plateau at
    theta/(m u) until lc, ramp down to ld, with the plateau length la..lc
    equal to m/theta so the total mass is exactly 1.
    """

    m: float
    theta: float = 0.5
    ramp: float = 2.0

    def __post_init__(self):
        if self.m <= math.e:
            raise ValueError("bump scale m must exceed e")

    @property
    def u_min(self) -> float:
        return math.log(self.m) + 1.0

    @property
    def la(self) -> float:
        return math.log(self.u_min)

    @property
    def lb(self) -> float:
        return self.la + self.ramp

    @property
    def lc(self) -> float:
        return self.la + self.m / self.theta

    @property
    def ld(self) -> float:
        return self.lc + self.ramp

    @property
    def support_upper(self) -> float:
        """Largest t with eta(t) != 0: strictly below 1/m."""
        return math.exp(-self.u_min)

    def _profile(self, el: np.ndarray) -> np.ndarray:
        up = _smoothstep((el - self.la) / self.ramp)
        down = _smoothstep((self.ld - el) / self.ramp)
        return np.where(el <= self.lb, up, np.where(el >= self.lc, down, 1.0))

    def _profile_prime(self, el: np.ndarray) -> np.ndarray:
        up = _smoothstep_prime((el - self.la) / self.ramp) / self.ramp
        down = -_smoothstep_prime((self.ld - el) / self.ramp) / self.ramp
        return np.where(el <= self.lb, up, np.where(el >= self.lc, down, 0.0))

    def _u_el(self, t) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        t = np.asarray(t, dtype=float)
        live = (t > 0.0) & (t < self.support_upper)
        u = np.where(live, -np.log(np.where(live, t, 0.5)), self.u_min)
        el = np.log(u)
        return t, live, np.where(live, el, self.la)

    def eta(self, t) -> np.ndarray:
        """Bump value; well-defined wherever t is representable."""
        t, live, el = self._u_el(t)
        u = np.exp(el)
        s = self._profile(el)
        vals = self.theta * s * np.exp(u) / (self.m * u)
        return np.where(live & (s > 0.0), vals, 0.0)

    def eta_prime(self, t) -> np.ndarray:
        t, live, el = self._u_el(t)
        u = np.exp(el)
        s = self._profile(el)
        sp = self._profile_prime(el)
        vals = -self.theta * np.exp(2.0 * u) / (self.m * u) * (s + (sp - s) / u)
        return np.where(live & ((s > 0.0) | (sp != 0.0)), vals, 0.0)

    def envelope_ratio(self, t) -> np.ndarray:
        """eta(t) / (xi(t)/m) = theta * S, exactly; must stay in [0, 1)."""
        _, live, el = self._u_el(t)
        return np.where(live, self.theta * self._profile(el), 0.0)

    def derivative_ratio(self, t) -> np.ndarray:
        """|eta'(t)| / (xi(t)/(m t)); must stay <= 1."""
        _, live, el = self._u_el(t)
        u = np.exp(el)
        s = self._profile(el)
        sp = self._profile_prime(el)
        return np.where(live, self.theta * np.abs(s + (sp - s) / u), 0.0)

    def mass(self) -> float:
        """Closed-form integral of eta over (0, infinity): exactly 1."""
        return (self.theta / self.m) * (self.lc - self.la)

    def mass_numeric(self, n: int = 200_001) -> float:
        """Simpson quadrature of the transported profile in el coordinates."""
        el = np.linspace(self.la, self.ld, n)
        vals = (self.theta / self.m) * self._profile(el)
        from scipy.integrate import simpson

        return float(simpson(vals, x=el))

    def cdf(self, t) -> np.ndarray:
        """H(t) = int_0^t eta: 0 at the bottom of the support, 1 above it."""
        t = np.asarray(t, dtype=float)
        out = np.empty(t.shape)
        out[t <= 0.0] = 0.0
        high = t >= self.support_upper
        out[high] = 1.0
        live = (t > 0.0) & ~high
        if np.any(live):
            el = np.log(-np.log(t[live]))
            out[live] = (self.theta / self.m) * self._tail_integral(el)
        return out

    def _tail_integral(self, el: np.ndarray) -> np.ndarray:
        """int_el^ld S(el') del', piecewise closed form."""
        delta = self.ramp
        plateau = self.lc - self.lb
        full = self.lc - self.la  # = delta/2 + plateau + delta/2 ... total integral
        res = np.empty(el.shape)
        res[el <= self.la] = full
        on_up = (el > self.la) & (el < self.lb)
        if np.any(on_up):
            x = (el[on_up] - self.la) / delta
            res[on_up] = delta * (0.5 - _smoothstep_integral(x)) + plateau + delta / 2.0
        on_plateau = (el >= self.lb) & (el <= self.lc)
        res[on_plateau] = (self.lc - el[on_plateau]) + delta / 2.0
        on_down = (el > self.lc) & (el < self.ld)
        if np.any(on_down):
            x = (self.ld - el[on_down]) / delta
            res[on_down] = delta * _smoothstep_integral(x)
        res[el >= self.ld] = 0.0
        return res

    def sample_ts(self, n: int = 10_000, u_max: float = 700.0) -> np.ndarray:
        """Representable sample points spanning the bump support, log-log spaced."""
        el_hi = min(self.ld, math.log(u_max))
        el = np.linspace(self.la + 1e-9, el_hi, n)
        return np.exp(-np.exp(el))


def build_bump(m: float) -> BumpFunction:
    """A smooth bump meeting the xi-envelope invariants with unit mass."""
    return BumpFunction(m=float(m))


# -- regions ------------------------------------------------------------------

class Region:
    """Open region with exact membership and distance-to-complement."""

    dim: int

    def contains(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def distance(self, pts: np.ndarray) -> np.ndarray:
        """d(x, Q^c) for x inside, 0 outside."""
        raise NotImplementedError

    def cube_distance(self, center: np.ndarray, side: float) -> float:
        """d(cube, Q^c) (0 if the cube is not strictly inside)."""
        raise NotImplementedError

    def cube_touches(self, center: np.ndarray, side: float) -> bool:
        """Whether the closed cube can intersect Q (conservative)."""
        raise NotImplementedError

    def bounding_cube(self, pad: float = 0.0) -> tuple[np.ndarray, float]:
        raise NotImplementedError


@dataclass(frozen=True)
class BallRegion(Region):
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    @property
    def dim(self) -> int:
        return len(self.center)

    def contains(self, pts):
        pts = np.atleast_2d(pts)
        return np.linalg.norm(pts - np.asarray(self.center), axis=-1) < self.radius

    def distance(self, pts):
        pts = np.atleast_2d(pts)
        return np.maximum(0.0, self.radius - np.linalg.norm(pts - np.asarray(self.center), axis=-1))

    def cube_distance(self, center, side):
        far = np.abs(np.asarray(center) - np.asarray(self.center)) + side / 2.0
        return max(0.0, self.radius - float(np.linalg.norm(far)))

    def cube_touches(self, center, side):
        near = np.maximum(0.0, np.abs(np.asarray(center) - np.asarray(self.center)) - side / 2.0)
        return float(np.linalg.norm(near)) < self.radius

    def bounding_cube(self, pad: float = 0.0):
        return np.asarray(self.center, dtype=float), 2.0 * (self.radius + pad)


@dataclass(frozen=True)
class BoxRegion(Region):
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(c) for c in np.atleast_1d(self.lo)))
        object.__setattr__(self, "hi", tuple(float(c) for c in np.atleast_1d(self.hi)))
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise ValueError("box must have positive extent")

    @property
    def dim(self) -> int:
        return len(self.lo)

    def contains(self, pts):
        pts = np.atleast_2d(pts)
        return np.all((pts > np.asarray(self.lo)) & (pts < np.asarray(self.hi)), axis=-1)

    def distance(self, pts):
        pts = np.atleast_2d(pts)
        margin = np.minimum(pts - np.asarray(self.lo), np.asarray(self.hi) - pts)
        return np.maximum(0.0, np.min(margin, axis=-1))

    def cube_distance(self, center, side):
        c = np.asarray(center)
        margin = np.minimum(c - side / 2.0 - np.asarray(self.lo),
                            np.asarray(self.hi) - c - side / 2.0)
        return max(0.0, float(np.min(margin)))

    def cube_touches(self, center, side):
        c = np.asarray(center)
        return bool(np.all((c + side / 2.0 > np.asarray(self.lo))
                           & (c - side / 2.0 < np.asarray(self.hi))))

    def bounding_cube(self, pad: float = 0.0):
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return (lo + hi) / 2.0, float(np.max(hi - lo)) + 2.0 * pad


@dataclass(frozen=True)
class UnionRegion(Region):
    """Union of member regions.

    distance() takes the max over members: exact for disjoint or nested
    members, a lower bound where members overlap.
    """

    members: tuple[Region, ...]

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if not self.members:
            raise ValueError("union needs at least one member")

    @property
    def dim(self) -> int:
        return self.members[0].dim

    def contains(self, pts):
        out = self.members[0].contains(pts)
        for m in self.members[1:]:
            out = out | m.contains(pts)
        return out

    def distance(self, pts):
        out = self.members[0].distance(pts)
        for m in self.members[1:]:
            out = np.maximum(out, m.distance(pts))
        return out

    def cube_distance(self, center, side):
        return max(m.cube_distance(center, side) for m in self.members)

    def cube_touches(self, center, side):
        return any(m.cube_touches(center, side) for m in self.members)

    def bounding_cube(self, pad: float = 0.0):
        cubes = [m.bounding_cube() for m in self.members]
        lo = np.min([c - s / 2.0 for c, s in cubes], axis=0)
        hi = np.max([c + s / 2.0 for c, s in cubes], axis=0)
        return (lo + hi) / 2.0, float(np.max(hi - lo)) + 2.0 * pad


class MaskRegion(Region):
    """Mask-backed region: distances via the Euclidean transform to cell centers."""

    def __init__(self, mask: DomainMask):
        self.mask = mask
        g = mask.grid
        self.dim = g.dim
        self._dist = ndimage.distance_transform_edt(mask.inside, sampling=g.spacing)

    def contains(self, pts):
        g = self.mask.grid
        pts = np.atleast_2d(pts)
        idx = []
        ok = np.ones(pts.shape[0], dtype=bool)
        for a in range(g.dim):
            i = np.floor((pts[:, a] - g.origin[a]) / g.spacing).astype(int)
            ok &= (i >= 0) & (i < g.shape[a])
            idx.append(np.clip(i, 0, g.shape[a] - 1))
        return ok & self.mask.inside[tuple(idx)]

    def distance(self, pts):
        g = self.mask.grid
        pts = np.atleast_2d(pts)
        out = np.zeros(pts.shape[0])
        inside = self.contains(pts)
        if np.any(inside):
            field = ScalarField(g, self._dist)
            out[inside] = interpolate_linear(field, pts[inside])
        return np.maximum(0.0, out)

    def cube_distance(self, center, side):
        g = self.mask.grid
        c = np.asarray(center)
        lo = c - side / 2.0
        hi = c + side / 2.0
        sl = []
        for a in range(g.dim):
            i0 = int(np.floor((lo[a] - g.origin[a]) / g.spacing))
            i1 = int(np.ceil((hi[a] - g.origin[a]) / g.spacing)) + 1
            if i1 <= 0 or i0 >= g.shape[a]:
                return 0.0
            sl.append(slice(max(0, i0), min(g.shape[a], i1)))
        block = self._dist[tuple(sl)]
        if block.size == 0:
            return 0.0
        # centers sampled minus the half-diagonal slack of a cell
        return max(0.0, float(block.min()) - g.spacing * math.sqrt(g.dim) / 2.0)

    def cube_touches(self, center, side):
        g = self.mask.grid
        c = np.asarray(center)
        sl = []
        for a in range(g.dim):
            i0 = int(np.floor((c[a] - side / 2.0 - g.origin[a]) / g.spacing))
            i1 = int(np.ceil((c[a] + side / 2.0 - g.origin[a]) / g.spacing)) + 1
            if i1 <= 0 or i0 >= g.shape[a]:
                return False
            sl.append(slice(max(0, i0), min(g.shape[a], i1)))
        block = self.mask.inside[tuple(sl)]
        return bool(block.any())

    def bounding_cube(self, pad: float = 0.0):
        g = self.mask.grid
        bounds = g.bounds()
        lo = np.array([b[0] for b in bounds])
        hi = np.array([b[1] for b in bounds])
        return (lo + hi) / 2.0, float(np.max(hi - lo)) + 2.0 * pad


# -- Whitney decomposition ----------------------------------------------------

def whitney_beta(dim: int) -> float:
    """1 / (8 + 3 sqrt(d)/2): lower bound on side/d(x,Q^c) of a covering cube."""
    return 1.0 / (8.0 + 1.5 * math.sqrt(dim))


@dataclass(frozen=True)
class WhitneyCube:
    center: tuple[float, ...]
    side: float
    level: int


class WhitneyError(ValueError):
    """Region unusable for decomposition (empty, or no boundary in the box)."""


def whitney_decompose(region: Region, max_level: int = 14,
                      max_cubes: int = 500_000,
                      window: tuple | None = None,
                      window_level: int | None = None) -> list[WhitneyCube]:
    """Dyadic cubes tiling the region with 2 side <= d(cube, Q^c) <= 8 side.

    Splits the bounding cube recursively: a cube is emitted when the double
    inequality holds, split while it still meets the region, and dropped at
    max_level (such cubes hug the boundary; points deeper than roughly
    2^-max_level stay covered).  Emitted cubes have disjoint interiors by
    construction.

    window=(point, cone_factor) with window_level > max_level keeps splitting
    past max_level for cubes with |center - point|_inf <= cone_factor * side:
    a refinement cone that resolves tiny distances near one boundary point
    without decomposing the whole boundary (the covering cubes of a point at
    depth delta sit within ~13 sides of it, so cone_factor 16 suffices).
    """
    center0, side0 = region.bounding_cube()
    if not region.cube_touches(center0, side0):
        raise WhitneyError("region is empty in its bounding cube")
    if region.cube_distance(center0, side0) > 0:
        # Q covers the whole box: no boundary to calibrate against
        if region.cube_distance(center0, 2.0 * side0) > 0:
            raise WhitneyError("region has no complement near the box")
    win_point = None
    cone = 16.0
    deep_level = max_level
    if window is not None:
        win_point = np.asarray(window[0], dtype=float)
        cone = float(window[1])
        deep_level = window_level if window_level is not None else max_level
    out: list[WhitneyCube] = []
    stack = [(np.asarray(center0, dtype=float), float(side0), 0)]
    d = region.dim
    offsets = np.array(np.meshgrid(*[(-0.25, 0.25)] * d, indexing="ij")).reshape(d, -1).T
    while stack:
        center, side, level = stack.pop()
        dist = region.cube_distance(center, side)
        if dist > 0.0 and dist <= 8.0 * side <= 4.0 * dist:
            out.append(WhitneyCube(tuple(center), side, level))
            if len(out) > max_cubes:
                raise WhitneyError(f"cube budget exceeded ({max_cubes})")
            continue
        limit = max_level
        if win_point is not None and level >= max_level and bool(
            np.all(np.abs(center - win_point) <= cone * side)
        ):
            limit = deep_level
        if level >= limit:
            continue
        if not region.cube_touches(center, side):
            continue
        for off in offsets:
            stack.append((center + off * side, side / 2.0, level + 1))
    if not out:
        raise WhitneyError("no cube qualified; region too thin for max_level")
    return out


# -- regularized distance -----------------------------------------------------

def _cube_profile(rel: np.ndarray, dim: int) -> np.ndarray:
    """Tensor bump: 1 on the unit cube, support in the (1 + 1/sqrt d) cube.

    rel: offsets from the cube center in units of the side, shape (..., dim).
    """
    edge = (1.0 + 1.0 / math.sqrt(dim)) / 2.0
    ramp = edge - 0.5
    a = np.abs(rel)
    per_axis = _smoothstep((edge - a) / ramp)
    per_axis = np.where(a <= 0.5, 1.0, per_axis)
    per_axis = np.where(a >= edge, 0.0, per_axis)
    return np.prod(per_axis, axis=-1)


class RegularizedDistance:
    """Delta_Q(x) = (1/beta) sum_cubes side * h_cube(x): smooth, comparable to
    d(x, Q^c), with |grad| <= C and |second difference| <= C / d(x, Q^c)."""

    def __init__(self, region: Region, cubes: Sequence[WhitneyCube] | None = None,
                 max_level: int = 14):
        self.region = region
        self.beta = whitney_beta(region.dim)
        self.cubes = list(cubes) if cubes is not None else whitney_decompose(region, max_level)
        center0, side0 = region.bounding_cube()
        self._lo = np.asarray(center0, dtype=float) - side0 / 2.0
        self._side0 = float(side0)
        self._levels: dict[int, np.ndarray] = {}
        self._deep_levels: dict[int, set] = {}
        per_level: dict[int, list[np.ndarray]] = {}
        for cube in self.cubes:
            side = cube.side
            k = np.round((np.asarray(cube.center) - self._lo) / side - 0.5).astype(np.int64)
            per_level.setdefault(cube.level, []).append(k)
        self._level_sides = {lv: self._side0 / 2**lv for lv in per_level}
        for lv, ks in per_level.items():
            arr = np.array(ks, dtype=np.int64)
            if (2**lv + 2) ** region.dim < 2**62:
                m = 2**lv + 2
                keys = np.zeros(arr.shape[0], dtype=np.int64)
                for a in range(region.dim):
                    keys = keys * m + (arr[:, a] + 1)
                self._levels[lv] = np.sort(keys)
            else:
                self._deep_levels[lv] = {tuple(row) for row in arr.tolist()}

    def __call__(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        d = self.region.dim
        out = np.zeros(pts.shape[0])
        neighbor = np.array(np.meshgrid(*[(-1, 0, 1)] * d, indexing="ij")).reshape(d, -1).T
        for lv, keys in self._levels.items():
            side = self._level_sides[lv]
            m = 2**lv + 2
            base = np.floor((pts - self._lo) / side).astype(np.int64)
            for off in neighbor:
                k = base + off
                valid = np.all((k >= -1) & (k <= m - 2), axis=-1)
                flat = np.zeros(pts.shape[0], dtype=np.int64)
                for a in range(d):
                    flat = flat * m + (k[:, a] + 1)
                pos = np.searchsorted(keys, flat)
                pos = np.clip(pos, 0, keys.size - 1)
                hit = valid & (keys[pos] == flat)
                if not np.any(hit):
                    continue
                centers = self._lo + (k[hit] + 0.5) * side
                rel = (pts[hit] - centers) / side
                out[hit] += side * _cube_profile(rel, d)
        for lv, coord_set in self._deep_levels.items():
            side = self._level_sides[lv]
            base = np.floor((pts - self._lo) / side).astype(np.int64)
            for off in neighbor:
                k = base + off
                for i in range(pts.shape[0]):
                    key = tuple(k[i].tolist())
                    if key in coord_set:
                        centers = self._lo + (np.asarray(key) + 0.5) * side
                        rel = (pts[i] - centers) / side
                        out[i] += side * float(_cube_profile(rel, d))
        return out / self.beta

    def theory_constants(self) -> dict:
        """Paper-chain bounds for the sandwich and derivative constants."""
        d = self.region.dim
        beta = self.beta
        n_levels = math.floor(math.log2(2.0 / beta) + 1.0)
        grad_h = 1.875 * 2.0 * math.sqrt(d) * d  # per-axis slope * gradient assembly
        second_h = (10.0 / math.sqrt(3.0)) * 4.0 * d
        return {
            "sandwich": n_levels * 2 ** (d + 1) / beta,
            "gradient": n_levels * 2**d * grad_h / beta,
            "second": n_levels * 2**d * second_h / beta**2,
        }

    def probe_constants(self, pts, fd_step: float | None = None) -> dict:
        """Empirical sandwich ratio, |grad|, and d(x) |second difference| maxima."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        d = self.region.dim
        dist = self.region.distance(pts)
        inside = dist > 0
        pts = pts[inside]
        dist = dist[inside]
        vals = self(pts)
        sandwich_low = float(np.min(vals / dist))
        sandwich_high = float(np.max(vals / dist))
        step = fd_step if fd_step is not None else 1e-5
        grad_sq = np.zeros(pts.shape[0])
        second_max = np.zeros(pts.shape[0])
        for a in range(d):
            e = np.zeros(d)
            e[a] = step
            up = self(pts + e)
            down = self(pts - e)
            grad_sq += ((up - down) / (2.0 * step)) ** 2
            second = (up - 2.0 * vals + down) / step**2
            second_max = np.maximum(second_max, np.abs(second))
        return {
            "sandwich_low": sandwich_low,
            "sandwich_high": sandwich_high,
            "gradient_max": float(np.sqrt(grad_sq).max()),
            "second_scaled_max": float((second_max * dist).max()),
        }


# -- Hedberg cutoffs ----------------------------------------------------------

class ResolutionError(ValueError):
    """Cutoff index incompatible with the sampling resolution (1/j < 4h)."""


class HedbergCutoff:
    """h_j(x) = H(Delta_Q(x)) with H the CDF of the bump at support scale 1/(C j).

    C is the effective regularized-distance constant, inflated so that both
    the gradient chain (needs C >= max|grad Delta|^2) and the second-derivative
    chain (needs C >= max d |second diff Delta|) close:

        |grad h_j| <= xi(delta)/j,   |second h_j| <= 2 xi(delta)/(j delta).
    """

    def __init__(self, region: Region, j: int, reg_dist: RegularizedDistance,
                 c_const: float):
        if j < 4:
            raise ValueError("cutoff index j must be >= 4")
        if c_const < 1.0:
            raise ValueError("distance constant must be >= 1")
        self.region = region
        self.j = int(j)
        self.c_const = float(c_const)
        self.reg_dist = reg_dist
        self.bump = build_bump(self.c_const * j)

    def __call__(self, pts) -> np.ndarray:
        return self.bump.cdf(self.reg_dist(pts))


def effective_distance_constant(rd: RegularizedDistance, probes) -> float:
    """max(1, sandwich, G, G^2, K): closes both Hedberg bound chains."""
    stats = rd.probe_constants(probes)
    g = stats["gradient_max"]
    return max(1.0, stats["sandwich_high"], g, g * g, stats["second_scaled_max"])


def hedberg_cutoff(region: Region, j: int, reg_dist: RegularizedDistance | None = None,
                   c_const: float | None = None, probes=None,
                   resolution: float | None = None) -> HedbergCutoff:
    """Build the depth-j cutoff; requires 1/j >= 4h when a resolution is given."""
    if resolution is not None and 1.0 / j < 4.0 * resolution:
        raise ResolutionError(f"1/j = {1.0/j} is below 4h = {4.0 * resolution}")
    if reg_dist is None:
        reg_dist = RegularizedDistance(region)
    if c_const is None:
        if probes is None:
            raise ValueError("need probe points (or an explicit constant) to size the cutoff")
        c_const = effective_distance_constant(reg_dist, probes)
    return HedbergCutoff(region, j, reg_dist, c_const)


# -- log-Lipschitz modulus ----------------------------------------------------

class ModulusResult(NamedTuple):
    sup: dict
    constants: dict
    stability_ratio: float


def _pair_directions(dim: int) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        ang = np.arange(8) * (math.pi / 4.0)
        return np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    dirs = np.array([(1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 1), (-1, 1, 1),
                     (1, -1, 1), (1, 1, -1), (-1, -1, 1)], dtype=float)
    return dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)


def log_lipschitz_modulus(grad_fields: Sequence[ScalarField], pair_scales: Sequence[float],
                          n_base: int = 24) -> ModulusResult:
    """sup over pairs |y - y'| = eps of |grad N(y) - grad N(y')|, per scale.

    Fits C(eps) = sup / (eps log(1/eps)); the modulus law holds when C is
    stable across scales (max/min <= 3 on the tested decades).  Pairs are a
    deterministic base lattice crossed with fixed directions.  Scales below
    four grid cells are rejected.
    """
    g = grad_fields[0].grid
    h = g.spacing
    scales = sorted(float(e) for e in pair_scales)
    for eps in scales:
        if eps < 4.0 * h:
            raise ResolutionError(f"pair scale {eps} below 4h = {4.0 * h}")
        if eps >= 1.0:
            raise ValueError("pair scales must be < 1 for the log factor")
    bounds = g.bounds()
    pad = max(scales) + h
    axes = [np.linspace(bounds[a][0] + pad, bounds[a][1] - pad, n_base)
            for a in range(g.dim)]
    base = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=-1)
    dirs = _pair_directions(g.dim)
    sup: dict = {}
    consts: dict = {}
    for eps in scales:
        worst = 0.0
        for dvec in dirs:
            shifted = base + eps * dvec
            diff_sq = np.zeros(base.shape[0])
            for comp in grad_fields:
                a = interpolate_linear(comp, base)
                b = interpolate_linear(comp, shifted)
                diff_sq += (a - b) ** 2
            worst = max(worst, float(np.sqrt(diff_sq).max()))
        sup[eps] = worst
        consts[eps] = worst / (eps * math.log(1.0 / eps))
    values = [v for v in consts.values() if v > 0]
    ratio = (max(values) / min(values)) if values else float("inf")
    return ModulusResult(sup=sup, constants=consts, stability_ratio=ratio)
