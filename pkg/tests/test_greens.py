import math

import numpy as np
import pytest

from qdlab import field, greens


def disk_field(nh=128, amp=1.0, box=1.5):
    n = int(2 * box * nh)
    g = field.Grid(2, (-box, -box), 1 / nh, (n, n))
    X, Y = g.centers()
    return field.ScalarField(g, amp * ((X**2 + Y**2) < 1.0))


def disk_field_centered(nh=64, amp=1.0, box=1.5):
    """Grid with a cell center exactly at the origin (odd cell count)."""
    h = 1 / nh
    n = int(2 * box * nh) + 1
    g = field.Grid(2, (-box - h / 2, -box - h / 2), h, (n, n))
    X, Y = g.centers()
    return field.ScalarField(g, amp * ((X**2 + Y**2) < 1.0))


class TestKernel:
    def test_pointwise_values(self):
        assert greens.green_kernel(1, (0.0,), (2.0,)) == pytest.approx(-1.0)
        assert greens.green_kernel(2, (0.0, 0.0), (1.0, 0.0)) == pytest.approx(0.0)
        assert greens.green_kernel(3, (0.0, 0.0, 0.0), (1.0, 0.0, 0.0)) == pytest.approx(
            1.0 / (4 * math.pi))

    def test_coincident_singularity(self):
        with pytest.raises(greens.SingularityError):
            greens.green_kernel(2, (0.3, 0.3), (0.3, 0.3))
        # 1D kernel is finite on the diagonal
        assert greens.green_kernel(1, (0.3,), (0.3,)) == 0.0

    def test_unit_sphere_area(self):
        assert greens.unit_sphere_area(1) == pytest.approx(2.0)
        assert greens.unit_sphere_area(2) == pytest.approx(2 * math.pi)
        assert greens.unit_sphere_area(3) == pytest.approx(4 * math.pi)

    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_block_symmetry(self, dim):
        g = field.Grid(dim, (0.0,) * dim, 1 / 8, (10,) * dim)
        block = greens.kernel_block(g)
        assert np.array_equal(block, block[tuple(slice(None, None, -1) for _ in range(dim))])

    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_discrete_harmonicity_scaled(self, dim):
        # max over offsets |v| >= 3h of |lap_h K| * |v|^d stays bounded
        h = 1 / 32
        n = 24
        g = field.Grid(dim, (0.0,) * dim, h, (n,) * dim)
        block = greens.kernel_block(g)
        bf = field.ScalarField(g if block.shape == g.shape else
                               field.Grid(dim, (0.0,) * dim, h, block.shape), block)
        lap = greens.discrete_laplacian(bf).values
        axes = [np.arange(-(n - 1), n) * h for _ in range(dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        r = np.sqrt(sum(m**2 for m in mesh))
        interior = np.zeros_like(r, dtype=bool)
        interior[tuple(slice(1, -1) for _ in range(dim))] = True
        sel = interior & (r >= 3 * h)
        assert np.max(np.abs(lap[sel]) * r[sel] ** dim) <= 10.0

    def test_singular_cell_values(self):
        h = 0.01
        assert greens.singular_cell_value(1, h) == pytest.approx(-h / 8)
        r_e = h / math.sqrt(math.pi)
        assert greens.singular_cell_value(2, h) == pytest.approx(
            (math.log(1 / r_e) + 0.5) / (2 * math.pi))
        r_e3 = (3 * h**3 / (4 * math.pi)) ** (1 / 3)
        assert greens.singular_cell_value(3, h) == pytest.approx(3 / (8 * math.pi * r_e3))


class TestAnalyticBallPotential:
    def test_d2_values(self):
        assert greens.analytic_ball_potential(1.0, 2, (0.0, 0.0)) == pytest.approx(0.25)
        assert greens.analytic_ball_potential(1.0, 2, (1.0, 0.0)) == pytest.approx(0.0)
        assert greens.analytic_ball_potential(1.0, 2, (2.0, 0.0)) == pytest.approx(
            -math.log(2) / 2)

    def test_d3_value(self):
        assert greens.analytic_ball_potential(1.0, 3, (2.0, 0.0, 0.0)) == pytest.approx(1 / 6)

    def test_d1_interval(self):
        # N 1_{(-R,R)}(x) = -(R^2 + x^2)/2 inside, -R|x| outside
        assert greens.analytic_ball_potential(1.0, 1, (0.0,)) == pytest.approx(-0.5)
        assert greens.analytic_ball_potential(1.0, 1, (2.0,)) == pytest.approx(-2.0)

    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_continuity_and_derivative_at_boundary(self, dim):
        R = 0.8
        eps = 1e-7
        lo = greens.ball_potential_radial(R, dim, np.array([R - eps]))[0]
        hi = greens.ball_potential_radial(R, dim, np.array([R + eps]))[0]
        assert abs(lo - hi) < 1e-6
        dlo = greens.ball_potential_radial_derivative(R, dim, np.array([R - eps]))[0]
        dhi = greens.ball_potential_radial_derivative(R, dim, np.array([R + eps]))[0]
        assert abs(dlo - dhi) < 1e-6

    def test_invalid_radius(self):
        with pytest.raises(ValueError):
            greens.analytic_ball_potential(-1.0, 2, (0.0, 0.0))


class TestNewtonianPotential:
    def test_disk_spot_values(self):
        w = disk_field(nh=128)
        N = greens.newtonian_potential(w)
        g = w.grid
        i0 = int(np.argmin(np.abs(g.axis_centers(0))))
        j0 = i0
        center_val = N.values[i0, j0]
        assert abs(center_val - 0.25) <= 1e-3
        # |x| = 1 (on the rim)
        i1 = int(np.argmin(np.abs(g.axis_centers(0) - 1.0)))
        assert abs(N.values[i1, j0] - 0.0) <= 2e-3

    def test_disk_far_value(self):
        w = disk_field(nh=128, box=2.25)
        g = w.grid
        N = greens.newtonian_potential(w)
        i2 = int(np.argmin(np.abs(g.axis_centers(0) - 2.0)))
        j0 = int(np.argmin(np.abs(g.axis_centers(1))))
        x = g.axis_centers(0)[i2]
        expect = -math.log(abs(x)) / (2 * math.pi) * math.pi
        assert abs(N.values[i2, j0] - expect) <= 1e-3

    def test_zero_field(self):
        g = field.Grid(2, (0.0, 0.0), 0.25, (8, 8))
        N = greens.newtonian_potential(field.ScalarField(g, np.zeros((8, 8))))
        assert np.all(N.values == 0.0)

    def test_radial_symmetry(self):
        w = disk_field_centered(nh=32)
        N = greens.newtonian_potential(w)
        g = w.grid
        idx = np.indices(g.shape)
        ci = (g.shape[0] - 1) // 2
        k2 = (idx[0] - ci) ** 2 + (idx[1] - ci) ** 2  # exact integer grouping
        spread = 0.0
        for key in np.unique(k2)[:200]:
            vals = N.values[k2 == key]
            spread = max(spread, float(vals.max() - vals.min()))
        assert spread <= 1e-10

    def test_laplacian_consistency_1d_exact(self):
        g = field.Grid(1, (-3.0,), 1 / 100, (600,))
        x = g.axis_centers(0)
        w = field.ScalarField(g, 2.5 * ((x > -1) & (x < 1)))
        N = greens.newtonian_potential(w)
        res = greens.discrete_laplacian(N).values + w.values
        # away from the two jump cells and the grid edge the identity is exact
        interior = np.zeros_like(x, dtype=bool)
        interior[1:-1] = True
        const_region = interior & (np.abs(np.abs(x) - 1.0) > 2.5 * g.spacing)
        assert np.abs(res[const_region]).max() <= 1e-8 * 2.5

    @pytest.mark.parametrize("dim,nh,amp", [(2, 64, 3.0), (3, 16, 2.0)])
    def test_laplacian_consistency_bound(self, dim, nh, amp):
        box = 2.0 if dim == 2 else 1.0
        R = 1.0 if dim == 2 else 0.5
        n = int(2 * box * nh)
        g = field.Grid(dim, (-box,) * dim, 1 / nh, (n,) * dim)
        mesh = g.centers()
        r = np.sqrt(sum(m**2 for m in mesh))
        w = field.ScalarField(g, amp * (r < R))
        N = greens.newtonian_potential(w)
        res = greens.discrete_laplacian(N).values + w.values
        interior = np.zeros_like(r, dtype=bool)
        interior[tuple(slice(1, -1) for _ in range(dim))] = True
        far = interior & (np.abs(r - R) > 0.25)
        assert np.abs(res[far]).max() <= 5.0 * g.spacing**2 * amp

    def test_neighbor_continuity(self):
        w = disk_field(nh=64, amp=3.0)
        N = greens.newtonian_potential(w)
        h = w.grid.spacing
        dmax = max(float(np.abs(np.diff(N.values, axis=a)).max()) for a in range(2))
        assert dmax <= 1.0 * h * math.log(1 / h) * 3.0


class TestConstOutside:
    def test_constant_one(self):
        g = field.Grid(2, (-1.0, -1.0), 1 / 16, (32, 32))
        w = field.ScalarField(g, np.ones(g.shape))
        N = greens.newtonian_potential_const_outside(w, 1.0)
        X, Y = g.centers()
        assert np.abs(N.values - (X**2 + Y**2) / 4.0).max() <= 1e-10

    def test_c_zero_reduces(self):
        w = disk_field(nh=32)
        a = greens.newtonian_potential_const_outside(w, 0.0)
        b = greens.newtonian_potential(w)
        assert np.array_equal(a.values, b.values)

    def test_complement_of_disk(self):
        # w = 1 - 1_{B1}: N = |x|^2/4 - N 1_{B1} by linearity
        w = disk_field(nh=32)
        g = w.grid
        comp = field.ScalarField(g, 1.0 - w.values)
        N = greens.newtonian_potential_const_outside(comp, 1.0)
        X, Y = g.centers()
        expect = (X**2 + Y**2) / 4.0 - greens.newtonian_potential(w).values
        assert np.abs(N.values - expect).max() <= 1e-10

    def test_negative_background_rejected(self):
        w = disk_field(nh=16)
        with pytest.raises(ValueError):
            greens.newtonian_potential_const_outside(w, -1.0)


class TestGradient:
    def test_disk_radial_derivative(self):
        w = disk_field_centered(nh=128, box=2.25)
        g = w.grid
        grads = greens.potential_gradient(w)
        i2 = int(np.argmin(np.abs(g.axis_centers(0) - 2.0)))
        j0 = int(np.argmin(np.abs(g.axis_centers(1))))
        x = g.axis_centers(0)[i2]
        assert x == pytest.approx(2.0, abs=1e-12)
        expect = -(1.0**2) / (2 * x)
        assert abs(grads[0].values[i2, j0] - expect) <= 1e-2
        assert abs(grads[1].values[i2, j0]) <= 1e-6

    def test_symmetry_at_origin(self):
        w = disk_field_centered(nh=64)
        g = w.grid
        grads = greens.potential_gradient(w)
        i0 = int(np.argmin(np.abs(g.axis_centers(0))))
        assert abs(g.axis_centers(0)[i0]) <= 1e-12
        assert abs(grads[0].values[i0, i0]) <= 1e-6
        assert abs(grads[1].values[i0, i0]) <= 1e-6

    def test_zero_field(self):
        g = field.Grid(2, (0.0, 0.0), 0.25, (8, 8))
        grads = greens.potential_gradient(field.ScalarField(g, np.zeros((8, 8))))
        assert all(np.all(c.values == 0.0) for c in grads)

    def test_matches_finite_differences(self):
        w = disk_field(nh=64, amp=2.0)
        g = w.grid
        h = g.spacing
        N = greens.newtonian_potential(w)
        grads = greens.potential_gradient(w)
        fd = np.gradient(N.values, h, axis=0)
        core = (slice(2, -2), slice(2, -2))
        err = np.abs(grads[0].values[core] - fd[core]).max()
        assert err <= 2.0 * h * math.log(1 / h) * 2.0


class TestDirectOracle:
    def test_fast_equals_direct_random(self):
        rng = np.random.default_rng(11)
        for dim, n in [(1, 64), (2, 16), (3, 6)]:
            g = field.Grid(dim, (0.0,) * dim, 1 / 16, (n,) * dim)
            w = field.ScalarField(g, rng.normal(size=(n,) * dim))
            fast = greens.newtonian_potential(w)
            direct = greens.direct_convolution_oracle(w)
            assert np.abs(fast.values - direct.values).max() <= 1e-10

    def test_fast_equals_direct_64(self):
        rng = np.random.default_rng(5)
        g = field.Grid(2, (-0.5, -0.5), 1 / 64, (64, 64))
        w = field.ScalarField(g, rng.normal(size=(64, 64)))
        fast = greens.newtonian_potential(w)
        direct = greens.direct_convolution_oracle(w)
        assert np.abs(fast.values - direct.values).max() <= 1e-10

    def test_delta_source_column(self):
        g = field.Grid(2, (0.0, 0.0), 1 / 8, (12, 12))
        vals = np.zeros((12, 12))
        vals[3, 7] = 1.0
        w = field.ScalarField(g, vals)
        N = greens.direct_convolution_oracle(w)
        centers = np.stack(g.centers(), axis=-1)
        r = np.linalg.norm(centers - centers[3, 7], axis=-1)
        rs = np.where(r == 0, 1.0, r)
        K = np.where(r == 0, greens.singular_cell_value(2, g.spacing),
                     greens.kernel_radial(2, rs))
        assert np.abs(N.values - K * g.cell_volume).max() <= 1e-14

    def test_zero(self):
        g = field.Grid(2, (0.0, 0.0), 0.5, (4, 4))
        N = greens.direct_convolution_oracle(field.ScalarField(g, np.zeros((4, 4))))
        assert np.all(N.values == 0.0)

    def test_grid_too_large(self):
        g = field.Grid(2, (0.0, 0.0), 1 / 512, (512, 512))
        w = field.ScalarField(g, np.zeros((512, 512)))
        with pytest.raises(greens.GridTooLargeError):
            greens.direct_convolution_oracle(w)
