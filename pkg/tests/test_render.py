import numpy as np
import pytest

from hpadyn.contours import ContourRendering, default_levels, marching_squares, render_svg
from hpadyn.numerics import PseudospectrumGrid


def radial_grid(n=101, extent=2.0):
    ax = np.linspace(-extent, extent, n)
    X, Y = np.meshgrid(ax, ax)
    return PseudospectrumGrid(ax, ax, np.hypot(X, Y))


class TestMarchingSquares:
    def test_unit_circle(self):
        grid = radial_grid()
        contours = marching_squares(grid, 1.0)
        assert len(contours) == 1
        loop = contours[0]
        np.testing.assert_allclose(loop[0], loop[-1], atol=1e-12)
        radii = np.hypot(loop[:, 0], loop[:, 1])
        cell_diag = np.hypot(grid.re_axis[1] - grid.re_axis[0],
                             grid.im_axis[1] - grid.im_axis[0])
        assert np.max(np.abs(radii - 1.0)) <= cell_diag

    def test_level_below_minimum_is_empty(self):
        ax = np.linspace(-2, 2, 31)
        X, Y = np.meshgrid(ax, ax)
        grid = PseudospectrumGrid(ax, ax, np.hypot(X, Y) + 0.5)
        assert marching_squares(grid, 0.3) == []

    def test_two_well_field(self):
        ax = np.linspace(-2, 2, 101)
        X, Y = np.meshgrid(ax, ax)
        grid = PseudospectrumGrid(ax, ax,
                                  np.minimum(np.hypot(X - 1, Y), np.hypot(X + 1, Y)))
        contours = marching_squares(grid, 0.5)
        assert len(contours) == 2
        for loop in contours:
            np.testing.assert_allclose(loop[0], loop[-1], atol=1e-12)
            center = 1.0 if loop[:, 0].mean() > 0 else -1.0
            radii = np.hypot(loop[:, 0] - center, loop[:, 1])
            assert np.max(np.abs(radii - 0.5)) <= 0.06

    def test_boundary_terminated(self):
        grid = radial_grid(n=41, extent=1.0)  # level set exits the window
        contours = marching_squares(grid, 1.2)
        assert len(contours) == 4
        for arc in contours:
            for end in (arc[0], arc[-1]):
                assert (np.isclose(np.abs(end), 1.0, atol=1e-9).any())

    def test_positive_level_required(self):
        with pytest.raises(ValueError):
            marching_squares(radial_grid(11), 0.0)


class TestRendering:
    def test_level_validation(self):
        grid = radial_grid(11)
        with pytest.raises(ValueError):
            ContourRendering(grid=grid, levels=np.array([0.2, 0.1]))
        with pytest.raises(ValueError):
            ContourRendering(grid=grid, levels=np.array([-1.0, 0.1]))
        with pytest.raises(ValueError):
            ContourRendering(grid=grid, overlay_curve="spiral")

    def test_default_levels(self):
        lv = default_levels()
        assert lv.size == 6
        assert lv[0] == pytest.approx(10**-1.5)
        assert lv[-1] == pytest.approx(10**-0.25)
        np.testing.assert_allclose(np.diff(np.log10(lv)),
                                   np.diff(np.log10(lv))[0])

    def test_svg_output(self, tmp_path):
        grid = radial_grid(61)
        path = tmp_path / "out.svg"
        rendering = ContourRendering(grid=grid, levels=np.array([0.5, 1.0, 1.5]),
                                     overlay_points=np.array([0.3 + 0.1j]),
                                     overlay_curve="circle")
        render_svg(rendering, path)
        text = path.read_text()
        assert text.startswith("<svg")
        assert text.count("<polyline") >= 3
        assert "<ellipse" in text        # unit-circle overlay
        assert '<circle' in text         # eigenvalue marker

    def test_svg_empty_levels_still_valid(self, tmp_path):
        # all values above the largest level: overlays but no contour paths
        ax = np.linspace(-1, 1, 11)
        grid = PseudospectrumGrid(ax, ax, np.full((11, 11), 5.0))
        path = tmp_path / "empty.svg"
        render_svg(ContourRendering(grid=grid, levels=np.array([0.1, 1.0]),
                                    overlay_curve="axis"), path)
        text = path.read_text()
        assert "<polyline" not in text
        assert "<line" in text
        assert text.rstrip().endswith("</svg>")
