import numpy as np
import pytest

from hpadyn import dde, floquet as fl
from hpadyn.numerics import resolvent_inf_norm


def zero_cycle(params, period=1.5):
    """Degenerate 'cycle' with identically zero orbit: both lagged-Hill
    coefficient functions vanish, freezing the perturbation system to the
    uncoupled decays."""
    n = int(period / 1e-3) + 4
    states = np.zeros((n, 2))
    return dde.LimitCycle(params=params, period=period,
                          orbit=dde.Trajectory(0.0, 1e-3, states, states.copy(),
                                               lambda t: np.zeros(2)))


class TestHatBasisGrid:
    def test_weights_partition_of_unity(self):
        g = fl.HatBasisGrid(np.linspace(-0.15, 0.0, 12))
        for t in (-0.15, -0.1234, -0.05, 0.0):
            w = g.weights(t)
            assert w.sum() == pytest.approx(1.0)
            assert np.all(w >= 0)

    def test_nodal_interpolation_is_exact(self):
        g = fl.HatBasisGrid(np.linspace(-0.15, 0.0, 9))
        for i, s in enumerate(g.s_points):
            w = g.weights(float(s))
            expected = np.zeros(9)
            expected[i] = 1.0
            np.testing.assert_allclose(w, expected, atol=1e-12)

    def test_minimum_size(self):
        with pytest.raises(ValueError):
            fl.HatBasisGrid(np.linspace(-1, 0, 5))


class TestPropagation:
    def test_linearity(self, params, cycle):
        grid = fl.HatBasisGrid(np.linspace(-params.max_delay, 0.0, 16))
        rng = np.random.default_rng(8)
        phi = rng.normal(size=(2, 16))
        psi = rng.normal(size=(2, 16))
        a, b = 0.7, -1.3
        out_phi = fl.propagate_histories(params, cycle, phi[:1], psi[:1], grid)
        out_psi = fl.propagate_histories(params, cycle, phi[1:], psi[1:], grid)
        combo_x = a * phi[:1] + b * phi[1:]
        combo_y = a * psi[:1] + b * psi[1:]
        out_combo = fl.propagate_histories(params, cycle, combo_x, combo_y, grid)
        scale = max(np.abs(out_combo[0]).max(), 1.0)
        np.testing.assert_allclose(
            out_combo[0], a * out_phi[0] + b * out_psi[0], atol=1e-8 * scale)
        np.testing.assert_allclose(
            out_combo[1], a * out_phi[1] + b * out_psi[1], atol=1e-8 * scale)

    def test_frozen_uncoupled_decay(self, params):
        # zero orbit kills both coupling coefficients; the period map is then
        # diag(exp(-c1*omega), exp(-omega)) on the span of values at s = 0
        cyc = zero_cycle(params, period=1.5)
        m = fl.assemble_monodromy(params, cyc, N=12)
        w = np.sort(np.abs(fl.floquet_spectrum(m)))[::-1]
        assert w[0] == pytest.approx(np.exp(-cyc.period), rel=1e-6)
        assert w[1] == pytest.approx(np.exp(-params.c1 * cyc.period), rel=1e-6)
        assert np.all(w[2:] < 1e-10)

    def test_matrix_reproduces_propagation(self, params, cycle, monodromy):
        # T v must equal the propagated piecewise-affine history with nodal
        # values v; the sup-norm ratio is then an identity on nodal vectors
        rng = np.random.default_rng(1)
        v = rng.normal(size=100)
        out_x, out_y = fl.propagate_histories(params, cycle, v[None, :50],
                                              v[None, 50:], monodromy.grid)
        image = np.concatenate([out_x[0], out_y[0]])
        np.testing.assert_allclose(monodromy.T @ v, image, rtol=1e-10, atol=1e-12)
        ratio_matrix = np.abs(monodromy.T @ v).max() / np.abs(v).max()
        ratio_function = np.abs(image).max() / np.abs(v).max()
        assert ratio_matrix == pytest.approx(ratio_function, rel=1e-12)


class TestMonodromy:
    def test_dominant_multiplier_near_one(self, monodromy):
        w = fl.floquet_spectrum(monodromy)
        assert abs(w[0].imag) < 1e-12
        assert w[0].real > 0
        assert abs(w[0] - 1.0) < 1e-3
        assert np.all(np.abs(w[1:]) <= 0.3)

    def test_dominant_real_across_sizes(self, params, cycle):
        for N in (30, 70):
            m = fl.assemble_monodromy(params, cycle, N=N)
            w = fl.floquet_spectrum(m)
            assert abs(w[0].imag) < 1e-12 and w[0].real > 0

    def test_cycle_derivative_is_fixed_mode(self, params, cycle, monodromy):
        v = fl.cycle_derivative_vector(monodromy, cycle)
        image = monodromy.T @ v
        rel = np.abs(image - v).max() / np.abs(v).max()
        assert rel <= 0.02

    def test_trivial_multiplier_convergence(self, params, cycle):
        gaps = []
        for N in (20, 35, 50, 80):
            m = fl.assemble_monodromy(params, cycle, N=N)
            w = fl.floquet_spectrum(m)
            gaps.append(abs(w[0] - 1.0))
        for a, b in zip(gaps, gaps[1:]):
            assert b <= 1.1 * a  # decreasing within 10% slack

    def test_spectrum_conjugation_closed(self, monodromy):
        w = fl.floquet_spectrum(monodromy)
        for z in w[np.abs(w.imag) > 1e-12]:
            assert np.min(np.abs(w - np.conj(z))) <= 1e-8


class TestFloquetPseudospectrum:
    def test_value_at_dominant_eigenvalue(self, monodromy):
        lam = fl.floquet_spectrum(monodromy)[0]
        nrm = resolvent_inf_norm(monodromy.T, complex(lam))
        value = 0.0 if not np.isfinite(nrm) else 1.0 / nrm
        assert value <= 1e-6

    def test_neumann_far_field(self):
        T = 0.5 * np.eye(4)
        m_norm = np.abs(T).sum(axis=1).max()
        for theta in (0.0, 1.0, 2.5):
            z = 2.0 * np.exp(1j * theta)
            value = 1.0 / resolvent_inf_norm(T, z)
            assert value >= 2.0 - m_norm - 1e-12

    def test_nonnormal_bulge_past_unit_circle(self, monodromy):
        # only one multiplier approaches the unit circle (at angle 0), yet the
        # 0.1-level pseudospectrum reaches outside the circle at angle 0.7,
        # where the distance to the spectrum is ~0.7: an 8x nonnormal bulge
        z = 1.05 * np.exp(0.7j)
        w = fl.floquet_spectrum(monodromy)
        dist = np.min(np.abs(w - z))
        value = 1.0 / resolvent_inf_norm(monodromy.T, z)
        assert dist > 0.6
        assert value <= 0.1

    def test_grid_shape_and_convention(self, monodromy):
        ax = np.linspace(-1.5, 1.5, 21)
        grid = fl.floquet_pseudospectrum(monodromy, ax, ax, workers=2)
        assert grid.values.shape == (21, 21)
        assert grid.values.min() >= 0.0


class TestFloquetKreiss:
    def test_contraction_oracle(self):
        grid = fl.HatBasisGrid(np.linspace(-0.15, 0.0, 8))
        m = fl.MonodromyMatrix(T=0.5 * np.eye(16), grid=grid, period=1.0,
                               h=0.0, anchor=0.0)
        res = fl.floquet_kreiss(m, c=1.0, r_max=10.0, radial_grid=64,
                                angular_grid=64)
        rs = np.linspace(1.0 + 1e-9, 10.0, 100_001)
        oracle = np.max((rs - 1.0) / (rs - 0.5))
        assert res.value == pytest.approx(oracle, rel=1e-4)

    def test_power_bound(self, monodromy):
        # raise c safely above the spectral radius, then check the
        # matrix-theorem direction sup_k c^-k ||T^k|| >= K_c
        c = 1.2
        res = fl.floquet_kreiss(monodromy, c=c, radial_grid=48, angular_grid=64)
        powers = [np.abs(np.linalg.matrix_power(monodromy.T, k)).sum(axis=1).max()
                  / c**k for k in range(101)]
        assert res.value <= max(powers) + 1e-6

    def test_precondition_when_radius_exceeds_c(self, monodromy):
        radius = np.abs(fl.floquet_spectrum(monodromy)[0])
        if radius >= 1.0:
            with pytest.raises(ValueError):
                fl.floquet_kreiss(monodromy, c=1.0)
        else:
            assert fl.floquet_kreiss(monodromy, c=1.0).value > 0


class TestSweep:
    def test_row_flagging(self, params):
        rows = fl.floquet_sweep_h([0.5], params, N=10, transient=40.0)
        assert rows[0].error is not None

    def test_csv_header(self, tmp_path):
        path = tmp_path / "sweep.csv"
        fl.write_floquet_sweep_csv(path, [fl.FloquetSweepRow(7.66, 0.99, 7.4)])
        assert path.read_text().splitlines()[0] == "h,dominant,kreiss"
