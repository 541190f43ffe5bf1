import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hpadyn.errors import NumericError
from hpadyn.numerics import (
    PseudospectrumGrid,
    eig_dense,
    kreiss_constant,
    resolvent_inf_norm,
    svd_min,
)


class TestSvdMin:
    def test_identity(self):
        sigma, v = svd_min(np.eye(2))
        assert sigma == pytest.approx(1.0)
        assert np.linalg.norm(v) == pytest.approx(1.0)

    def test_rank_deficient_diagonal(self):
        sigma, v = svd_min(np.diag([3.0, 0.0]))
        assert sigma == pytest.approx(0.0, abs=1e-15)
        assert abs(v[1]) == pytest.approx(1.0)

    def test_shear(self):
        # oracle: eigenvalues of M^T M solve mu^2 - 3 mu + 1 = 0
        mu_min = (3.0 - np.sqrt(5.0)) / 2.0
        sigma, v = svd_min(np.array([[1.0, 1.0], [0.0, 1.0]]))
        assert sigma == pytest.approx(np.sqrt(mu_min), rel=1e-12)

    def test_residual_postcondition(self):
        rng = np.random.default_rng(5)
        M = rng.normal(size=(7, 7)) + 1j * rng.normal(size=(7, 7))
        sigma, v = svd_min(M)
        sigma_max = np.linalg.norm(M, 2)
        assert abs(np.linalg.norm(M @ v) - sigma) <= 1e-10 * sigma_max

    def test_stacked(self):
        stack = np.stack([np.eye(2), np.diag([3.0, 0.5])])
        sigma, v = svd_min(stack)
        assert sigma.shape == (2,)
        assert sigma[1] == pytest.approx(0.5)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            svd_min(np.array([[np.nan, 0.0], [0.0, 1.0]]))

    @given(arrays(np.float64, (4, 4), elements=st.floats(-10, 10)))
    @settings(max_examples=50, deadline=None)
    def test_sigma_min_lower_bounds_action(self, M):
        rng = np.random.default_rng(0)
        u = rng.normal(size=4)
        u /= np.linalg.norm(u)
        sigma, _ = svd_min(M)
        assert sigma <= np.linalg.norm(M @ u) + 1e-9


class TestResolventInfNorm:
    def test_diagonal(self):
        assert resolvent_inf_norm(np.diag([0.5, 0.2]), 1.0) == pytest.approx(2.0)

    def test_zero_matrix(self):
        assert resolvent_inf_norm(np.zeros((2, 2)), 2.0) == pytest.approx(0.5)

    def test_jordan_block(self):
        # oracle: closed-form inverse [[-10, -100], [0, -10]], row sum 110
        T = np.array([[0.9, 1.0], [0.0, 0.9]])
        assert resolvent_inf_norm(T, 1.0) == pytest.approx(110.0, rel=1e-10)

    def test_singular_sentinel(self):
        assert resolvent_inf_norm(np.diag([1.0, 2.0]), 1.0) == np.inf

    @given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.1, 3), st.floats(0.1, 3))
    @settings(max_examples=50, deadline=None)
    def test_diagonal_equals_reciprocal_distance(self, a, b, zr, zi):
        # any induced norm of a diagonal resolvent is 1/dist(z, entries)
        z = complex(zr, zi)
        dist = min(abs(z - a), abs(z - b))
        if dist < 1e-6:
            return
        got = resolvent_inf_norm(np.diag([a, b]), z)
        assert got == pytest.approx(1.0 / dist, rel=1e-9)


class TestEigDense:
    def test_diagonal(self):
        w, _ = eig_dense(np.diag([1.0, 2.0]))
        assert sorted(w.real) == pytest.approx([1.0, 2.0])

    def test_rotation(self):
        w, _ = eig_dense(np.array([[0.0, 1.0], [-1.0, 0.0]]))
        assert sorted(w.imag) == pytest.approx([-1.0, 1.0])
        assert np.allclose(w.real, 0.0)

    def test_companion(self):
        # companion matrix of p(lam) = lam^2 - 3 lam + 2; oracle = quadratic formula
        roots = sorted(np.roots([1.0, -3.0, 2.0]).real)
        w, _ = eig_dense(np.array([[0.0, -2.0], [1.0, 3.0]]))
        assert sorted(w.real) == pytest.approx(roots)

    def test_residuals(self):
        rng = np.random.default_rng(11)
        M = rng.normal(size=(20, 20))
        w, V = eig_dense(M)
        norm = np.abs(M).sum(axis=1).max()
        for k in range(20):
            assert np.linalg.norm(M @ V[:, k] - w[k] * V[:, k]) <= 1e-8 * norm


class TestKreissConstant:
    def test_scalar_contraction_oracle(self):
        # oracle: 1-D scan of (r - 1) / (r - 0.5) over the annulus 1 < r <= 10
        T = 0.5 * np.eye(2)
        rs = np.linspace(1.0 + 1e-9, 10.0, 200_001)
        oracle = np.max((rs - 1.0) / (rs - 0.5))
        got = kreiss_constant(lambda z: resolvent_inf_norm(T, z), 1.0, r_max=10.0)
        assert got.value == pytest.approx(oracle, rel=1e-4)
        assert abs(got.argmax_z) > 1.0

    def test_power_bound_inequality(self):
        rng = np.random.default_rng(3)
        T = rng.normal(size=(6, 6))
        T *= 0.6 / np.abs(np.linalg.eigvals(T)).max()
        c = 1.0
        res = kreiss_constant(lambda z: resolvent_inf_norm(T, z), c,
                              radial_grid=60, angular_grid=64)
        powers = [np.abs(np.linalg.matrix_power(T, k)).sum(axis=1).max() / c**k
                  for k in range(201)]
        assert res.value <= max(powers) + 1e-6

    def test_normal_matrix_contained(self):
        D = np.diag([0.9, -0.5, 0.3j]).astype(complex)
        res = kreiss_constant(lambda z: resolvent_inf_norm(D, z), 1.0,
                              radial_grid=40, angular_grid=48)
        powers = [np.abs(np.linalg.matrix_power(D, k)).sum(axis=1).max()
                  for k in range(201)]
        assert res.value <= max(powers) + 1e-6

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            kreiss_constant(lambda z: 1.0, 1.0, radial_grid=8)

    def test_nan_resolvent_rejected(self):
        with pytest.raises(NumericError):
            kreiss_constant(lambda z: float("nan"), 1.0,
                            radial_grid=16, angular_grid=16)


class TestPseudospectrumGrid:
    def test_validation(self):
        ax = np.linspace(0, 1, 5)
        with pytest.raises(ValueError):
            PseudospectrumGrid(ax, ax, -np.ones((5, 5)))
        with pytest.raises(ValueError):
            PseudospectrumGrid(ax[::-1], ax, np.ones((5, 5)))

    def test_interpolation(self):
        ax = np.linspace(-1, 1, 21)
        X, Y = np.meshgrid(ax, ax)
        g = PseudospectrumGrid(ax, ax, X**2 + Y**2 + 1.0)
        assert g.interpolate(0.0 + 0.0j) == pytest.approx(1.0, abs=1e-9)
        assert g.interpolate(0.5 + 0.5j) == pytest.approx(1.5, abs=0.01)

    def test_csv_roundtrip(self, tmp_path):
        ax = np.linspace(-1, 1, 7)
        vals = np.abs(np.sin(np.outer(ax, ax))) + 0.1
        g = PseudospectrumGrid(ax, ax, vals)
        path = tmp_path / "grid.csv"
        g.write_csv(path, value_name="sigma_min")
        back = PseudospectrumGrid.read_csv(path)
        np.testing.assert_allclose(back.values, g.values, rtol=0, atol=0)
        np.testing.assert_array_equal(back.re_axis, g.re_axis)
