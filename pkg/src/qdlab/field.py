"""Grids, scalar fields, weight rasterization, integration, and field I/O.

Everything lives on a uniform cell-centered Cartesian lattice: the cell with
index (i_1, ..., i_d) has its center at origin_k + (i_k + 1/2) * h and volume
h^d.  Integrals are plain cell sums, which keeps every quadrature in the
package first-order consistent with the solver stencil.

File format (QDF1, text):

    QDF1 <dim> <n1> [n2] [n3] <h> <o1> [o2] [o3]
    v v v ...

Values are whitespace-separated, row-major with x1 varying fastest.  A mask is
a QDF1 field with values in {0, 1}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class FieldFormatError(ValueError):
    """Malformed QDF1 content: bad header, count mismatch, non-finite data."""


class SupportNotContainedError(ValueError):
    """Weight support does not fit in the grid with the required margin."""


class WeightAmplitudeError(ValueError):
    """A weight primitive has amplitude < 1 (not properly supported)."""


def _as_tuple(x, dim: int) -> tuple[float, ...]:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.shape != (dim,):
        raise ValueError(f"expected {dim} coordinates, got shape {arr.shape}")
    return tuple(float(v) for v in arr)


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered lattice in dimension 1, 2, or 3."""

    dim: int
    origin: tuple[float, ...]
    spacing: float
    shape: tuple[int, ...]

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2, or 3, got {self.dim}")
        object.__setattr__(self, "origin", _as_tuple(self.origin, self.dim))
        object.__setattr__(self, "shape", tuple(int(n) for n in np.atleast_1d(self.shape)))
        if len(self.shape) != self.dim:
            raise ValueError("shape length must equal dim")
        if self.spacing <= 0:
            raise ValueError("spacing must be positive")
        if any(n < 2 for n in self.shape):
            raise ValueError("every shape entry must be >= 2")

    @property
    def h(self) -> float:
        return self.spacing

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))

    def axis_centers(self, axis: int) -> np.ndarray:
        return self.origin[axis] + (np.arange(self.shape[axis]) + 0.5) * self.spacing

    def centers(self) -> list[np.ndarray]:
        """Meshgrid (ij-indexed) of cell-center coordinates, one array per axis."""
        return list(np.meshgrid(*(self.axis_centers(a) for a in range(self.dim)), indexing="ij"))

    def bounds(self) -> list[tuple[float, float]]:
        return [
            (self.origin[a], self.origin[a] + self.shape[a] * self.spacing)
            for a in range(self.dim)
        ]

    def same_lattice(self, other: "Grid") -> bool:
        return (
            self.dim == other.dim
            and self.shape == other.shape
            and math.isclose(self.spacing, other.spacing, rel_tol=0, abs_tol=1e-12)
            and all(
                math.isclose(a, b, rel_tol=0, abs_tol=1e-12 * max(1.0, self.spacing))
                for a, b in zip(self.origin, other.origin)
            )
        )


def _freeze(values: np.ndarray) -> np.ndarray:
    values = np.ascontiguousarray(values, dtype=float)
    values.flags.writeable = False
    return values


@dataclass(frozen=True)
class ScalarField:
    """Real values on a Grid, one per cell.  Immutable after construction."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values shape {vals.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", _freeze(vals))

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values)

    def __add__(self, other):
        o = other.values if isinstance(other, ScalarField) else other
        return ScalarField(self.grid, self.values + o)

    def __sub__(self, other):
        o = other.values if isinstance(other, ScalarField) else other
        return ScalarField(self.grid, self.values - o)

    def __mul__(self, scalar):
        return ScalarField(self.grid, self.values * float(scalar))

    __rmul__ = __mul__


@dataclass(frozen=True)
class DomainMask:
    """Boolean per-cell mask (the discrete carrier of Q and A)."""

    grid: Grid
    inside: np.ndarray

    def __post_init__(self):
        ins = np.asarray(self.inside, dtype=bool)
        if ins.shape != self.grid.shape:
            raise ValueError("mask shape != grid shape")
        ins = np.ascontiguousarray(ins)
        ins.flags.writeable = False
        object.__setattr__(self, "inside", ins)

    @property
    def measure(self) -> float:
        return self.grid.cell_volume * float(np.count_nonzero(self.inside))

    def as_field(self) -> ScalarField:
        return ScalarField(self.grid, self.inside.astype(float))

    def boundary_cells(self) -> np.ndarray:
        """Inside cells that have an outside face neighbor (or touch the grid edge)."""
        ins = self.inside
        boundary = np.zeros_like(ins)
        for axis in range(self.grid.dim):
            lo = [slice(None)] * self.grid.dim
            hi = [slice(None)] * self.grid.dim
            lo[axis] = slice(None, -1)
            hi[axis] = slice(1, None)
            edge = ins[tuple(lo)] & ~ins[tuple(hi)]
            boundary[tuple(lo)] |= edge
            edge = ins[tuple(hi)] & ~ins[tuple(lo)]
            boundary[tuple(hi)] |= edge
            first = [slice(None)] * self.grid.dim
            first[axis] = 0
            boundary[tuple(first)] |= ins[tuple(first)]
            last = [slice(None)] * self.grid.dim
            last[axis] = -1
            boundary[tuple(last)] |= ins[tuple(last)]
        return boundary

    def perimeter_estimate(self) -> float:
        """h^(d-1) times the count of boundary cells.  Crude but budget-grade."""
        return self.grid.spacing ** (self.grid.dim - 1) * float(
            np.count_nonzero(self.boundary_cells())
        )


@dataclass(frozen=True)
class Primitive:
    """One amplitude-weighted ball or box of a weight function."""

    kind: str
    center: tuple[float, ...]
    amplitude: float
    radius: float = 0.0
    half_widths: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("ball", "box"):
            raise ValueError(f"primitive kind must be 'ball' or 'box', got {self.kind!r}")
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))
        if self.kind == "ball" and self.radius <= 0:
            raise ValueError("ball radius must be positive")
        if self.kind == "box":
            hw = tuple(float(w) for w in np.atleast_1d(self.half_widths))
            if len(hw) != len(self.center) or any(w <= 0 for w in hw):
                raise ValueError("box half_widths must be positive and match center")
            object.__setattr__(self, "half_widths", hw)

    @property
    def dim(self) -> int:
        return len(self.center)

    def bbox(self) -> list[tuple[float, float]]:
        if self.kind == "ball":
            return [(c - self.radius, c + self.radius) for c in self.center]
        return [(c - w, c + w) for c, w in zip(self.center, self.half_widths)]

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Strict containment of points (shape (..., dim)) in the open primitive."""
        pts = np.asarray(points, dtype=float)
        c = np.asarray(self.center)
        if self.kind == "ball":
            return np.sum((pts - c) ** 2, axis=-1) < self.radius**2
        hw = np.asarray(self.half_widths)
        return np.all(np.abs(pts - c) < hw, axis=-1)


@dataclass(frozen=True)
class WeightSpec:
    """A properly supported weight: union of amplitude >= 1 balls/boxes, or a field file."""

    primitives: tuple[Primitive, ...] = ()
    field_path: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))
        for p in self.primitives:
            if p.amplitude < 1.0:
                raise WeightAmplitudeError(
                    f"amplitude {p.amplitude} < 1: weight is not properly supported"
                )
            if not np.isfinite(p.amplitude):
                raise WeightAmplitudeError("amplitude must be finite")

    @property
    def dim(self) -> int:
        if self.primitives:
            return self.primitives[0].dim
        raise ValueError("dimension of an empty/file-backed weight spec is undefined")

    def support_bbox(self) -> list[tuple[float, float]] | None:
        if not self.primitives:
            return None
        boxes = [p.bbox() for p in self.primitives]
        return [
            (min(b[a][0] for b in boxes), max(b[a][1] for b in boxes))
            for a in range(self.primitives[0].dim)
        ]

    def max_amplitude_sum(self) -> float:
        """Max over bbox-overlap cliques of summed amplitudes (upper bound on max w)."""
        if not self.primitives:
            return 0.0
        best = 0.0
        for p in self.primitives:
            pb = p.bbox()
            total = 0.0
            for q in self.primitives:
                qb = q.bbox()
                if all(pb[a][0] < qb[a][1] and qb[a][0] < pb[a][1] for a in range(p.dim)):
                    total += q.amplitude
            best = max(best, total)
        return best


def ball(center, radius: float, amplitude: float = 1.0) -> Primitive:
    return Primitive(kind="ball", center=tuple(np.atleast_1d(center)), radius=radius,
                     amplitude=amplitude)


def box(center, half_widths, amplitude: float = 1.0) -> Primitive:
    return Primitive(kind="box", center=tuple(np.atleast_1d(center)),
                     half_widths=tuple(np.atleast_1d(half_widths)), amplitude=amplitude)


def interval(a: float, b: float, amplitude: float = 1.0) -> Primitive:
    """1D convenience: the open interval (a, b) as a box primitive."""
    return box(((a + b) / 2.0,), ((b - a) / 2.0,), amplitude)


def rasterize_weight(spec: WeightSpec, grid: Grid) -> ScalarField:
    """Sample the weight at cell centers: sum of amplitudes of containing primitives.

    The result is 0 or >= 1 everywhere.  Centers exactly on a primitive
    boundary sample 0 (primitives are open sets).  Requires the union of
    supports to sit inside the grid with at least one cell of margin.
    """
    if spec.field_path is not None:
        w = read_field(spec.field_path)
        if not w.grid.same_lattice(grid):
            raise SupportNotContainedError("external weight field lives on a different grid")
        return w
    bounds = grid.bounds()
    h = grid.spacing
    for p in spec.primitives:
        for a, (lo, hi) in enumerate(p.bbox()):
            if lo < bounds[a][0] + h or hi > bounds[a][1] - h:
                raise SupportNotContainedError(
                    f"primitive support [{lo}, {hi}] on axis {a} exceeds grid "
                    f"{bounds[a]} minus one-cell margin"
                )
    values = np.zeros(grid.shape)
    if spec.primitives:
        pts = np.stack(grid.centers(), axis=-1)
        for p in spec.primitives:
            values += p.amplitude * p.contains(pts)
    return ScalarField(grid, values)


def integrate(f: ScalarField) -> float:
    """Cell-sum approximation of the integral: h^d * sum(values).

    numpy's pairwise summation order is fixed for a fixed shape, so the
    reduction is deterministic across calls and processes.
    """
    return f.grid.cell_volume * float(np.sum(f.values))


@dataclass(frozen=True)
class Moments:
    measure: float
    centroid: tuple[float, ...]
    second_moment: float


def moments(obj: ScalarField | DomainMask) -> Moments:
    """Measure, centroid, and second moment (about the origin) of a mask or field.

    Zero total measure leaves the centroid undefined; it is reported as NaN.
    """
    f = obj.as_field() if isinstance(obj, DomainMask) else obj
    if isinstance(obj, ScalarField) and np.any(f.values < 0):
        raise ValueError("moments require a nonnegative field or a mask")
    vol = f.grid.cell_volume
    total = vol * float(np.sum(f.values))
    centers = f.grid.centers()
    if total == 0.0:
        centroid = tuple(float("nan") for _ in range(f.grid.dim))
    else:
        centroid = tuple(
            vol * float(np.sum(centers[a] * f.values)) / total for a in range(f.grid.dim)
        )
    r2 = sum(c**2 for c in centers)
    second = vol * float(np.sum(r2 * f.values))
    return Moments(measure=total, centroid=centroid, second_moment=second)


# -- QDF1 field files ---------------------------------------------------------

def write_field(f: ScalarField, path: str | Path) -> None:
    g = f.grid
    header = ["QDF1", str(g.dim), *(str(n) for n in g.shape), repr(float(g.spacing)),
              *(repr(float(o)) for o in g.origin)]
    flat = f.values.flatten(order="F")  # x1 fastest
    lines = [" ".join(header)]
    per_line = 6
    for i in range(0, flat.size, per_line):
        lines.append(" ".join(repr(float(v)) for v in flat[i : i + per_line]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_field(path: str | Path) -> ScalarField:
    text = Path(path).read_text()
    tokens = text.split()
    if not tokens or tokens[0] != "QDF1":
        raise FieldFormatError("missing QDF1 magic")
    try:
        dim = int(tokens[1])
    except (IndexError, ValueError) as exc:
        raise FieldFormatError("unreadable dimension") from exc
    if dim not in (1, 2, 3):
        raise FieldFormatError(f"dim must be 1, 2, or 3, got {dim}")
    n_header = 1 + 1 + dim + 1 + dim
    if len(tokens) < n_header:
        raise FieldFormatError("truncated header")
    try:
        shape = tuple(int(t) for t in tokens[2 : 2 + dim])
        h = float(tokens[2 + dim])
        origin = tuple(float(t) for t in tokens[3 + dim : 3 + 2 * dim])
    except ValueError as exc:
        raise FieldFormatError("unreadable header numbers") from exc
    data = tokens[n_header:]
    expected = int(np.prod(shape))
    if len(data) != expected:
        raise FieldFormatError(f"expected {expected} values, found {len(data)}")
    try:
        flat = np.array([float(t) for t in data])
    except ValueError as exc:
        raise FieldFormatError("unreadable value") from exc
    if not np.all(np.isfinite(flat)):
        raise FieldFormatError("non-finite value in field file")
    grid = Grid(dim=dim, origin=origin, spacing=h, shape=shape)
    return ScalarField(grid, flat.reshape(shape, order="F"))


def write_mask(mask: DomainMask, path: str | Path) -> None:
    write_field(mask.as_field(), path)


def read_mask(path: str | Path) -> DomainMask:
    f = read_field(path)
    vals = f.values
    if not np.all((vals == 0.0) | (vals == 1.0)):
        raise FieldFormatError("mask file must contain only 0 and 1 values")
    return DomainMask(f.grid, vals > 0.5)


def write_mask_pgm(mask: DomainMask, path: str | Path) -> None:
    """P2 image of a 2D mask: inside=255, outside=0, one row per x2 line.

    The top row is the largest x2 (plot orientation).
    """
    if mask.grid.dim != 2:
        raise ValueError("PGM export is defined for 2D masks only")
    n1, n2 = mask.grid.shape
    img = np.where(mask.inside, 255, 0)
    lines = ["P2", f"{n1} {n2}", "255"]
    for j in range(n2 - 1, -1, -1):
        lines.append(" ".join(str(v) for v in img[:, j]))
    Path(path).write_text("\n".join(lines) + "\n")


def interpolate_linear(f: ScalarField, points) -> np.ndarray:
    """Multilinear interpolation of a cell-centered field at physical points.

    Points must stay at least half a cell inside the outermost cell centers.
    """
    g = f.grid
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[-1] != g.dim:
        raise ValueError(f"points must have {g.dim} coordinates")
    u = (pts - np.asarray(g.origin)) / g.spacing - 0.5
    hi = np.asarray(g.shape) - 1
    if np.any(u < 0.0) or np.any(u > hi):
        raise ValueError("interpolation point outside the cell-center hull")
    i0 = np.minimum(np.floor(u).astype(int), hi - 1)
    frac = u - i0
    out = np.zeros(pts.shape[0])
    for corner in range(2**g.dim):
        idx = []
        weight = np.ones(pts.shape[0])
        for a in range(g.dim):
            bit = (corner >> a) & 1
            idx.append(i0[:, a] + bit)
            weight = weight * (frac[:, a] if bit else 1.0 - frac[:, a])
        out += weight * f.values[tuple(idx)]
    return out
