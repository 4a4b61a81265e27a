import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qdlab import field


def disk_spec(amp=1.0, r=1.0, center=(0.0, 0.0)):
    return field.WeightSpec((field.ball(center, r, amp),))


class TestGrid:
    def test_basic(self):
        g = field.Grid(2, (-1.0, -1.0), 0.5, (4, 4))
        assert g.cell_volume == 0.25
        assert g.axis_centers(0)[0] == -0.75
        assert g.bounds() == [(-1.0, 1.0), (-1.0, 1.0)]

    @pytest.mark.parametrize("kwargs", [
        dict(dim=4, origin=(0,) * 4, spacing=1.0, shape=(4,) * 4),
        dict(dim=2, origin=(0, 0), spacing=-1.0, shape=(4, 4)),
        dict(dim=2, origin=(0, 0), spacing=1.0, shape=(1, 4)),
        dict(dim=2, origin=(0, 0), spacing=1.0, shape=(4,)),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            field.Grid(**kwargs)

    def test_fields_are_immutable(self):
        g = field.Grid(1, (0.0,), 1.0, (4,))
        f = field.ScalarField(g, np.zeros(4))
        with pytest.raises(ValueError):
            f.values[0] = 1.0


class TestRasterize:
    def test_unit_disk_area(self):
        g = field.Grid(2, (-2.0, -2.0), 1 / 64, (256, 256))
        w = field.rasterize_weight(disk_spec(), g)
        assert abs(field.integrate(w) - math.pi) <= 4 / 64

    def test_two_intervals_mass(self):
        # amplitude-3 weight on (1,2) and (4,5): total mass 6
        g = field.Grid(1, (0.0,), 1 / 64, (384,))
        spec = field.WeightSpec((field.interval(1, 2, 3.0), field.interval(4, 5, 3.0)))
        w = field.rasterize_weight(spec, g)
        assert abs(field.integrate(w) - 6.0) <= 2 / 64

    def test_empty_spec(self):
        g = field.Grid(2, (0.0, 0.0), 0.25, (8, 8))
        w = field.rasterize_weight(field.WeightSpec(()), g)
        assert np.all(w.values == 0.0)

    def test_values_zero_or_at_least_one(self):
        g = field.Grid(2, (-2.0, -2.0), 1 / 32, (128, 128))
        spec = field.WeightSpec((field.ball((0, 0), 1.0, 1.0),
                                 field.ball((0.5, 0), 0.8, 2.5)))
        w = field.rasterize_weight(spec, g)
        assert np.all((w.values == 0.0) | (w.values >= 1.0))

    def test_amplitude_below_one_rejected(self):
        with pytest.raises(field.WeightAmplitudeError):
            field.WeightSpec((field.ball((0, 0), 1.0, 0.5),))

    def test_support_not_contained(self):
        g = field.Grid(2, (-1.0, -1.0), 0.25, (8, 8))
        with pytest.raises(field.SupportNotContainedError):
            field.rasterize_weight(disk_spec(r=1.0), g)

    @given(st.permutations(range(3)))
    @settings(max_examples=10, deadline=None)
    def test_permutation_invariance(self, perm):
        prims = (field.ball((0, 0), 0.5, 1.5), field.ball((0.4, 0.1), 0.3, 2.0),
                 field.box((0.2, -0.2), (0.2, 0.3), 1.0))
        g = field.Grid(2, (-1.5, -1.5), 1 / 16, (48, 48))
        ref = field.rasterize_weight(field.WeightSpec(prims), g)
        shuffled = field.rasterize_weight(
            field.WeightSpec(tuple(prims[i] for i in perm)), g)
        assert np.array_equal(ref.values, shuffled.values)


class TestIntegrate:
    def test_constant_box(self):
        g = field.Grid(2, (0.0, 0.0), 0.5, (4, 4))
        assert field.integrate(field.ScalarField(g, np.ones((4, 4)))) == pytest.approx(4.0)

    def test_scaled_disk(self):
        g = field.Grid(2, (-2.0, -2.0), 1 / 128, (512, 512))
        w = field.rasterize_weight(disk_spec(amp=4.0), g)
        assert abs(field.integrate(w) - 4 * math.pi) <= 0.01 * 4 * math.pi

    def test_zero(self):
        g = field.Grid(1, (0.0,), 1.0, (8,))
        assert field.integrate(field.ScalarField(g, np.zeros(8))) == 0.0

    @given(st.floats(-3, 3), st.floats(-3, 3))
    @settings(max_examples=20, deadline=None)
    def test_linearity(self, a, b):
        g = field.Grid(1, (0.0,), 0.25, (16,))
        rng = np.random.default_rng(42)
        f = field.ScalarField(g, rng.normal(size=16))
        q = field.ScalarField(g, rng.normal(size=16))
        lhs = field.integrate(field.ScalarField(g, a * f.values + b * q.values))
        rhs = a * field.integrate(f) + b * field.integrate(q)
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs), abs(rhs))

    def test_first_order_convergence_of_disk_measure(self):
        errors = {}
        for nh in (32, 64, 128):
            g = field.Grid(2, (-2.0, -2.0), 1 / nh, (2 * nh * 2, 2 * nh * 2))
            w = field.rasterize_weight(disk_spec(), g)
            errors[nh] = abs(field.integrate(w) - math.pi)
        assert errors[32] / errors[64] >= 1.5
        assert errors[64] / errors[128] >= 1.5


class TestMoments:
    def test_offset_disk_centroid(self):
        g = field.Grid(2, (-1.0, -2.0), 1 / 64, (256, 256))
        w = field.rasterize_weight(disk_spec(center=(1.0, 0.0)), g)
        m = field.moments(w)
        assert abs(m.centroid[0] - 1.0) <= 1 / 64
        assert abs(m.centroid[1] - 0.0) <= 1 / 64

    def test_inertia_comparison_disk_vs_spread(self):
        # spreading 4*1_{B1} uniformly over B2 preserves mass, grows inertia
        g = field.Grid(2, (-3.0, -3.0), 1 / 64, (384, 384))
        w = field.rasterize_weight(disk_spec(amp=4.0), g)
        X, Y = g.centers()
        Q = field.DomainMask(g, X**2 + Y**2 < 4.0)
        assert field.moments(Q).second_moment >= field.moments(w).second_moment

    def test_interval_mask(self):
        g = field.Grid(1, (-1.0,), 1 / 100, (800,))
        x = g.axis_centers(0)
        mask = field.DomainMask(g, (x > 0) & (x < 6))
        m = field.moments(mask)
        assert abs(m.measure - 6.0) <= 2 / 100
        assert abs(m.centroid[0] - 3.0) <= 1 / 100

    def test_zero_measure_centroid_is_nan(self):
        g = field.Grid(1, (0.0,), 1.0, (4,))
        m = field.moments(field.ScalarField(g, np.zeros(4)))
        assert m.measure == 0.0
        assert math.isnan(m.centroid[0])

    def test_negative_field_rejected(self):
        g = field.Grid(1, (0.0,), 1.0, (4,))
        with pytest.raises(ValueError):
            field.moments(field.ScalarField(g, np.array([1.0, -1.0, 0.0, 0.0])))


class TestFieldIO:
    def test_roundtrip_exact(self, tmp_path):
        rng = np.random.default_rng(3)
        g = field.Grid(2, (-0.311, 0.7), 0.013, (3, 3))
        f = field.ScalarField(g, rng.normal(size=(3, 3)) * 1e3)
        p = tmp_path / "f.qdf"
        field.write_field(f, p)
        back = field.read_field(p)
        assert np.array_equal(back.values, f.values)
        assert back.grid.same_lattice(g)

    @given(st.lists(st.floats(-1e12, 1e12, allow_nan=False), min_size=6, max_size=6))
    @settings(max_examples=25, deadline=None)
    def test_roundtrip_hypothesis(self, vals):
        import tempfile

        g = field.Grid(1, (0.0,), 0.5, (6,))
        f = field.ScalarField(g, np.array(vals))
        with tempfile.TemporaryDirectory() as d:
            p = f"{d}/f.qdf"
            field.write_field(f, p)
            assert np.array_equal(field.read_field(p).values, f.values)

    def test_header_count_mismatch(self, tmp_path):
        p = tmp_path / "bad.qdf"
        p.write_text("QDF1 2 3 3 0.5 0.0 0.0\n1 2 3 4\n")
        with pytest.raises(field.FieldFormatError):
            field.read_field(p)

    def test_nan_entry(self, tmp_path):
        p = tmp_path / "nan.qdf"
        p.write_text("QDF1 1 3 0.5 0.0\n1 NaN 3\n")
        with pytest.raises(field.FieldFormatError):
            field.read_field(p)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "m.qdf"
        p.write_text("QDX1 1 3 0.5 0.0\n1 2 3\n")
        with pytest.raises(field.FieldFormatError):
            field.read_field(p)

    def test_x1_fastest_layout(self, tmp_path):
        g = field.Grid(2, (0.0, 0.0), 1.0, (2, 3))
        vals = np.arange(6.0).reshape(2, 3)
        p = tmp_path / "layout.qdf"
        field.write_field(field.ScalarField(g, vals), p)
        tokens = p.read_text().split()
        data = [float(t) for t in tokens[7:]]
        # x1 fastest: (0,0),(1,0),(0,1),(1,1),(0,2),(1,2)
        assert data == [0.0, 3.0, 1.0, 4.0, 2.0, 5.0]

    def test_mask_roundtrip_and_validation(self, tmp_path):
        g = field.Grid(2, (0.0, 0.0), 1.0, (3, 3))
        mask = field.DomainMask(g, np.eye(3, dtype=bool))
        p = tmp_path / "m.qdf"
        field.write_mask(mask, p)
        assert np.array_equal(field.read_mask(p).inside, mask.inside)
        f = field.ScalarField(g, np.full((3, 3), 0.5))
        p2 = tmp_path / "notmask.qdf"
        field.write_field(f, p2)
        with pytest.raises(field.FieldFormatError):
            field.read_mask(p2)

    def test_pgm(self, tmp_path):
        g = field.Grid(2, (0.0, 0.0), 1.0, (2, 2))
        mask = field.DomainMask(g, np.array([[True, False], [False, True]]))
        p = tmp_path / "m.pgm"
        field.write_mask_pgm(mask, p)
        lines = p.read_text().splitlines()
        assert lines[0] == "P2"
        assert lines[1] == "2 2"
        assert lines[2] == "255"
        # top row = largest x2: cells (0,1)=False, (1,1)=True
        assert lines[3].split() == ["0", "255"]
        assert lines[4].split() == ["255", "0"]


class TestInterpolation:
    def test_exact_on_linear(self):
        g = field.Grid(2, (-1.0, -1.0), 0.125, (16, 16))
        X, Y = g.centers()
        f = field.ScalarField(g, 2.0 * X - 3.0 * Y + 0.5)
        pts = np.array([[0.1, 0.2], [-0.5, 0.33], [0.0, 0.0]])
        expect = 2.0 * pts[:, 0] - 3.0 * pts[:, 1] + 0.5
        assert np.allclose(field.interpolate_linear(f, pts), expect, atol=1e-12)

    def test_outside_raises(self):
        g = field.Grid(1, (0.0,), 1.0, (4,))
        f = field.ScalarField(g, np.zeros(4))
        with pytest.raises(ValueError):
            field.interpolate_linear(f, np.array([[5.0]]))


class TestBoundaryAndPerimeter:
    def test_boundary_cells_of_strip(self):
        g = field.Grid(2, (0.0, 0.0), 1.0, (5, 5))
        inside = np.zeros((5, 5), dtype=bool)
        inside[1:4, 1:4] = True
        mask = field.DomainMask(g, inside)
        b = mask.boundary_cells()
        assert b[1, 1] and b[2, 1] and b[1, 2]
        assert not b[2, 2]
        assert mask.perimeter_estimate() == 8.0
