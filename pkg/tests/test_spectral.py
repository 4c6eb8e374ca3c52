"""Spectral infrastructure: transforms, derivatives, quadrature, elliptic solves."""

import numpy as np
import pytest

from pnpns.errors import (
    GridMismatchError,
    NoConvergenceError,
    NonPositiveMobilityError,
    NonZeroMeanError,
)
from pnpns.spectral import (
    Grid,
    ScalarField,
    VectorField,
    apply_weighted_laplacian,
    ddx,
    ddy,
    div,
    grad,
    inner_product,
    inv_laplacian_zero_mean,
    inverse_transform,
    laplacian,
    make_grid,
    solve_weighted_laplacian,
    transform,
)

from conftest import band_limited, positive_field
from oracles import dense_solve_zero_mean, dense_weighted_laplacian, direct_dft2

TWO_PI = 2.0 * np.pi


class TestGridBasics:
    def test_rejects_odd_or_tiny(self):
        for bad in (3, 5, 2, 7):
            with pytest.raises(ValueError):
                Grid(bad)

    def test_quadrature_weight(self):
        g = make_grid(16)
        assert g.weight == pytest.approx((TWO_PI / 16) ** 2, rel=0, abs=0)

    def test_scalar_field_shape_check(self, grid16):
        with pytest.raises(GridMismatchError):
            ScalarField(grid16, np.zeros((8, 8)))

    def test_scalar_field_rejects_nan(self, grid16):
        bad = np.zeros((16, 16))
        bad[3, 3] = np.nan
        with pytest.raises(ValueError):
            ScalarField(grid16, bad)

    def test_vector_field_grid_mismatch(self, grid8, grid16):
        with pytest.raises(GridMismatchError):
            VectorField(ScalarField.constant(grid8, 0.0),
                        ScalarField.constant(grid16, 0.0))


class TestTransforms:
    def test_constant_field_dc_mode(self, grid16):
        c = transform(ScalarField.constant(grid16, 1.0))
        assert c.coeffs[0, 0] == pytest.approx(1.0, abs=1e-14)
        rest = c.coeffs.copy()
        rest[0, 0] = 0.0
        assert np.abs(rest).max() < 1e-14

    def test_single_harmonic(self, grid16):
        c = transform(ScalarField.from_function(grid16, lambda x, y: np.cos(x)))
        expected = np.zeros((16, 16), dtype=complex)
        expected[1, 0] = 0.5
        expected[-1, 0] = 0.5
        assert np.abs(c.coeffs - expected).max() < 1e-14

    @pytest.mark.parametrize("n", [8, 16, 32, 64])
    def test_round_trip(self, n, rng):
        g = make_grid(n)
        f = ScalarField(g, rng.standard_normal((n, n)))
        back = inverse_transform(transform(f))
        scale = np.abs(f.values).max()
        assert np.abs(back.values - f.values).max() <= 1e-13 * scale

    def test_transform_matches_direct_dft(self, grid8, rng):
        f = ScalarField(grid8, rng.standard_normal((8, 8)))
        ours = transform(f).coeffs
        direct = direct_dft2(f.values)
        assert np.abs(ours - direct).max() <= 1e-12 * np.abs(direct).max()


class TestDerivatives:
    def test_ddx_sin(self, grid16):
        f = ScalarField.from_function(grid16, lambda x, y: np.sin(x))
        assert np.abs(ddx(f).values - np.cos(grid16.xx)).max() <= 1e-12

    def test_every_retained_harmonic(self, grid16):
        g = grid16
        for k in range(1, g.n_modes // 2):
            c = ScalarField.from_function(g, lambda x, y, k=k: np.cos(k * x))
            s = ScalarField.from_function(g, lambda x, y, k=k: np.sin(k * x))
            assert np.abs(ddx(c).values + k * np.sin(k * g.xx)).max() <= 1e-12 * max(k, 1)
            assert np.abs(ddx(s).values - k * np.cos(k * g.xx)).max() <= 1e-12 * max(k, 1)

    def test_nyquist_mode_zeroed(self, grid8):
        half = grid8.n_modes // 2
        f = ScalarField.from_function(grid8, lambda x, y: np.cos(half * x))
        assert np.abs(ddx(f).values).max() <= 1e-12

    def test_laplacian_eigenfunction(self, grid16):
        f = ScalarField.from_function(grid16, lambda x, y: np.cos(x) * np.cos(y))
        assert np.abs(laplacian(f).values + 2.0 * f.values).max() <= 1e-12

    def test_div_grad_is_laplacian(self, grid, rng):
        f = ScalarField(grid, band_limited(grid, rng))
        composed = div(grad(f))
        assert np.abs(composed.values - laplacian(f).values).max() <= 1e-11

    def test_ddy_matches_transposed_ddx(self, grid16, rng):
        vals = band_limited(grid16, rng)
        assert np.abs(ddy(ScalarField(grid16, vals)).values
                      - ddx(ScalarField(grid16, vals.T)).values.T).max() <= 1e-12


class TestInnerProduct:
    def test_constants(self, grid16):
        one = ScalarField.constant(grid16, 1.0)
        assert inner_product(one, one) == pytest.approx(TWO_PI**2, rel=1e-14)

    @pytest.mark.parametrize("n", [4, 8, 16])
    def test_sin_squared(self, n):
        g = make_grid(n)
        s = ScalarField.from_function(g, lambda x, y: np.sin(x))
        assert inner_product(s, s) == pytest.approx(2.0 * np.pi**2, rel=1e-13)

    def test_orthogonality(self, grid16):
        s = ScalarField.from_function(grid16, lambda x, y: np.sin(x))
        c = ScalarField.from_function(grid16, lambda x, y: np.cos(x))
        assert abs(inner_product(s, c)) <= 1e-13

    def test_symmetry_and_bilinearity(self, grid16, rng):
        u = ScalarField(grid16, rng.standard_normal((16, 16)))
        v = ScalarField(grid16, rng.standard_normal((16, 16)))
        w = ScalarField(grid16, rng.standard_normal((16, 16)))
        assert inner_product(u, v) == pytest.approx(inner_product(v, u), rel=1e-13)
        lhs = inner_product(ScalarField(grid16, 2.0 * u.values + 3.0 * v.values), w)
        rhs = 2.0 * inner_product(u, w) + 3.0 * inner_product(v, w)
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_grid_mismatch(self, grid8, grid16):
        with pytest.raises(GridMismatchError):
            inner_product(ScalarField.constant(grid8, 1.0),
                          ScalarField.constant(grid16, 1.0))


class TestInverseLaplacian:
    def test_eigenfunction(self, grid16):
        f = ScalarField.from_function(grid16, lambda x, y: 2.0 * np.cos(x) * np.cos(y))
        g = inv_laplacian_zero_mean(f)
        assert np.abs(g.values - np.cos(grid16.xx) * np.cos(grid16.yy)).max() <= 1e-13

    def test_zero_maps_to_zero(self, grid16):
        g = inv_laplacian_zero_mean(ScalarField.constant(grid16, 0.0))
        assert np.abs(g.values).max() == 0.0

    def test_higher_harmonic(self, grid16):
        f = ScalarField.from_function(grid16, lambda x, y: 5.0 * np.cos(3 * x))
        g = inv_laplacian_zero_mean(f)
        assert np.abs(g.values - (5.0 / 9.0) * np.cos(3 * grid16.xx)).max() <= 1e-13

    def test_rejects_nonzero_mean(self, grid16):
        with pytest.raises(NonZeroMeanError):
            inv_laplacian_zero_mean(ScalarField.constant(grid16, 1.0))

    def test_inverts_negative_laplacian(self, grid, rng):
        vals = band_limited(grid, rng)
        vals -= vals.mean()
        f = ScalarField(grid, vals)
        back = inv_laplacian_zero_mean(ScalarField(grid, -laplacian(f).values))
        assert np.abs(back.values - f.values).max() <= 1e-11


class TestWeightedLaplacian:
    def test_unit_mobility_is_neg_laplacian(self, grid16):
        m = ScalarField.constant(grid16, 1.0)
        f = ScalarField.from_function(grid16, lambda x, y: np.cos(x))
        out = apply_weighted_laplacian(m, f)
        assert np.abs(out.values - np.cos(grid16.xx)).max() <= 1e-12

    def test_constant_field_maps_to_zero(self, grid16, rng):
        m = ScalarField(grid16, positive_field(grid16, rng))
        out = apply_weighted_laplacian(m, ScalarField.constant(grid16, 4.2))
        assert np.abs(out.values).max() <= 1e-13

    def test_rejects_nonpositive_mobility(self, grid16):
        m = ScalarField.from_function(grid16, lambda x, y: np.sin(x))
        with pytest.raises(NonPositiveMobilityError):
            apply_weighted_laplacian(m, ScalarField.constant(grid16, 1.0))

    def test_matches_dense_assembly(self, grid8):
        m = ScalarField.from_function(grid8, lambda x, y: 2.0 + np.sin(x))
        f = ScalarField.from_function(grid8, lambda x, y: np.cos(y))
        ours = apply_weighted_laplacian(m, f).values
        dense = dense_weighted_laplacian(m.values) @ f.values.ravel()
        scale = np.abs(dense).max()
        assert np.abs(ours.ravel() - dense).max() <= 1e-9 * scale

    def test_random_matches_dense_assembly(self, grid8, rng):
        m = ScalarField(grid8, positive_field(grid8, rng, base=1.5, kmax=3))
        f = ScalarField(grid8, band_limited(grid8, rng, kmax=3))
        ours = apply_weighted_laplacian(m, f).values
        dense = dense_weighted_laplacian(m.values) @ f.values.ravel()
        scale = max(np.abs(dense).max(), 1.0)
        assert np.abs(ours.ravel() - dense).max() <= 1e-9 * scale

    def test_self_adjoint(self, grid, rng):
        m = ScalarField(grid, positive_field(grid, rng, kmax=grid.n_modes // 4))
        f = ScalarField(grid, band_limited(grid, rng, kmax=grid.n_modes // 4))
        g = ScalarField(grid, band_limited(grid, rng, kmax=grid.n_modes // 4))
        lhs = inner_product(apply_weighted_laplacian(m, f), g)
        rhs = inner_product(apply_weighted_laplacian(m, g), f)
        assert abs(lhs - rhs) <= 1e-11 * max(abs(lhs), 1.0)

    def test_coercive(self, grid, rng):
        m_vals = positive_field(grid, rng, kmax=grid.n_modes // 4)
        f_vals = band_limited(grid, rng, kmax=grid.n_modes // 4)
        f_vals -= f_vals.mean()
        m = ScalarField(grid, m_vals)
        f = ScalarField(grid, f_vals)
        quad = inner_product(apply_weighted_laplacian(m, f), f)
        gx, gy = grid.grad(f.values)
        grad_sq = grid.inner(gx, gx) + grid.inner(gy, gy)
        assert quad >= m_vals.min() * grad_sq - 1e-10


class TestWeightedSolve:
    def test_unit_mobility_reduces_to_inv_laplacian(self, grid16):
        m = ScalarField.constant(grid16, 1.0)
        f = ScalarField.from_function(grid16, lambda x, y: 2.0 * np.cos(x) * np.cos(y))
        g = solve_weighted_laplacian(m, f)
        assert np.abs(g.values - np.cos(grid16.xx) * np.cos(grid16.yy)).max() <= 1e-10

    def test_solve_then_apply(self, grid16, rng):
        m = ScalarField(grid16, positive_field(grid16, rng, base=1.2))
        f_vals = band_limited(grid16, rng)
        f_vals -= f_vals.mean()
        f = ScalarField(grid16, f_vals)
        g = solve_weighted_laplacian(m, f, tol=1e-13)
        back = apply_weighted_laplacian(m, g)
        scale = np.sqrt(grid16.inner(f.values, f.values))
        err = np.sqrt(grid16.inner(back.values - f.values, back.values - f.values))
        assert err <= 1e-10 * scale

    def test_matches_dense_solve(self, grid8):
        m = ScalarField.from_function(
            grid8, lambda x, y: 1.1 + 0.5 * np.cos(x) * np.cos(y))
        f = ScalarField.from_function(grid8, lambda x, y: np.cos(2 * x))
        ours = solve_weighted_laplacian(m, f, tol=1e-14)
        dense = dense_solve_zero_mean(dense_weighted_laplacian(m.values), f.values)
        scale = np.abs(dense).max()
        assert np.abs(ours.values - dense).max() <= 1e-9 * scale

    def test_rejects_nonzero_mean(self, grid16):
        m = ScalarField.constant(grid16, 1.0)
        with pytest.raises(NonZeroMeanError):
            solve_weighted_laplacian(m, ScalarField.constant(grid16, 1.0))

    def test_rejects_nonpositive_mobility(self, grid16):
        m = ScalarField.constant(grid16, 0.0)
        f = ScalarField.from_function(grid16, lambda x, y: np.cos(x))
        with pytest.raises(NonPositiveMobilityError):
            solve_weighted_laplacian(m, f)

    def test_no_convergence_reported(self, grid16):
        m = ScalarField.from_function(grid16, lambda x, y: 1.0 + 0.9 * np.sin(x))
        f = ScalarField.from_function(grid16, lambda x, y: np.cos(2 * x))
        with pytest.raises(NoConvergenceError) as err:
            solve_weighted_laplacian(m, f, tol=1e-14, max_iter=1)
        assert err.value.iterations >= 1
        assert err.value.residual > 0


class TestDealiasedProduct:
    def test_matches_pointwise_for_resolved_product(self, grid16, rng):
        a = band_limited(grid16, rng, kmax=3)
        b = band_limited(grid16, rng, kmax=3)
        plain = grid16.multiply(a, b)
        padded = grid16.multiply(a, b, dealias=True)
        assert np.abs(plain - padded).max() <= 1e-12

    def test_removes_aliased_mode(self, grid8):
        a = np.cos(3 * grid8.xx)
        aliased = grid8.multiply(a, a)             # picks up a spurious cos(2x)
        clean = grid8.multiply(a, a, dealias=True)  # true product truncated: 1/2
        spec_aliased = np.fft.fft2(aliased) / 64
        spec_clean = np.fft.fft2(clean) / 64
        assert abs(spec_aliased[2, 0]) > 0.2
        assert abs(spec_clean[2, 0]) <= 1e-13
        assert spec_clean[0, 0] == pytest.approx(0.5, abs=1e-13)


class TestProjection:
    def test_projected_field_is_divergence_free(self, grid, rng):
        vx = rng.standard_normal((grid.n_modes,) * 2)
        vy = rng.standard_normal((grid.n_modes,) * 2)
        px, py = grid.project_div_free(vx, vy)
        assert grid.norm(grid.div(px, py)) <= 1e-11 * max(grid.norm(px), 1.0)

    def test_idempotent(self, grid16, rng):
        vx = rng.standard_normal((16, 16))
        vy = rng.standard_normal((16, 16))
        px, py = grid16.project_div_free(vx, vy)
        qx, qy = grid16.project_div_free(px, py)
        assert np.abs(qx - px).max() <= 1e-12
        assert np.abs(qy - py).max() <= 1e-12
