"""Panel quadrature: exactness, interpolation, contour counting."""

import numpy as np
import pytest

from blochdirac.quadrature import (PanelGrid, adaptive_circle_sum,
                                   build_panel_grid, circle_nodes,
                                   cumulative_integral, geometric_center_breaks,
                                   graded_breaks, panel_derivative,
                                   panel_interpolate, refine_breaks,
                                   winding_number)


@pytest.fixture(scope="module")
def grid():
    return build_panel_grid(np.array([0.0, 0.7, 1.1, np.pi]), order=10)


def test_polynomial_exactness(grid):
    # Gauss-Legendre of order 10 integrates degree 19 exactly
    vals = grid.nodes ** 19
    assert grid.integrate(vals) == pytest.approx(np.pi ** 20 / 20.0, rel=1e-13)


def test_oscillatory_integral(grid):
    w = 3.0
    got = grid.integrate(np.exp(1j * w * grid.nodes))
    want = (np.exp(1j * w * np.pi) - 1.0) / (1j * w)
    assert abs(got - want) < 1e-13


def test_cumulative_integral_matches_antiderivative(grid):
    vals = np.cos(grid.nodes)[None, :]
    cum = cumulative_integral(grid, vals)
    assert np.max(np.abs(cum[0] - np.sin(grid.nodes))) < 1e-10
    # degree order-2 polynomials integrate exactly, panel chaining included
    cum9 = cumulative_integral(grid, (grid.nodes ** 8)[None, :])
    assert np.max(np.abs(cum9[0] - grid.nodes ** 9 / 9.0)) < 1e-11


def test_panel_derivative_exact_on_polynomials(grid):
    der = panel_derivative(grid, (grid.nodes ** 9)[None, :])
    want = 9.0 * grid.nodes ** 8
    assert np.max(np.abs(der[0] - want)) / np.max(np.abs(want)) < 1e-12


def test_interpolation_reproduces_nodes_and_polynomials(grid):
    vals = np.sin(3.0 * grid.nodes)
    assert np.max(np.abs(panel_interpolate(grid, vals, grid.nodes) - vals)) < 1e-12
    xs = np.linspace(0.05, 3.0, 37)
    v9 = grid.nodes ** 9
    assert np.max(np.abs(panel_interpolate(grid, v9, xs) - xs ** 9)) \
        / np.max(xs ** 9) < 1e-13


def test_interpolation_rejects_outside_span(grid):
    with pytest.raises(ValueError):
        panel_interpolate(grid, np.ones_like(grid.nodes), np.array([4.0]))


def test_refined_grid_halves_panels(grid):
    fine = grid.refined(2)
    assert fine.npanels == 2 * grid.npanels
    assert fine.integrate(fine.nodes ** 2) == pytest.approx(np.pi ** 3 / 3.0)


def test_refine_breaks_enforces_width():
    br = refine_breaks(np.array([0.0, 1.0]), 0.3)
    assert np.max(np.diff(br)) <= 0.3 + 1e-15
    assert br[0] == 0.0 and br[-1] == 1.0


def test_graded_and_center_breaks_shapes():
    gb = graded_breaks(0.0, 1.0, ratio=2.0)
    assert gb[0] == 0.0 and gb[-1] == 1.0
    assert np.all(np.diff(gb) > 0)
    cb = geometric_center_breaks(0.5, 0.1, 4)
    assert cb[0] == pytest.approx(0.4) and cb[-1] == pytest.approx(0.6)
    assert np.all(np.diff(cb) > 0)


def test_winding_number_counts_zeros():
    # (z - a)(z - b) with both roots inside the circle
    a, b = 0.2 + 0.1j, -0.3
    th = np.linspace(0.0, 2.0 * np.pi, 257)
    z = np.exp(1j * th)
    assert winding_number((z - a) * (z - b)) == 2
    assert winding_number(z - 5.0) == 0


def test_circle_nodes_resolve_cauchy_integral():
    z, dz = circle_nodes(0.3 + 0.1j, 0.5, 64)
    total = np.sum(dz / (z - (0.3 + 0.1j)))
    assert abs(total - 2j * np.pi) < 1e-12


def test_adaptive_circle_sum_converges():
    # contour integral of 1/(z - c) with c off-center inside the circle
    c = 0.17 - 0.05j

    def fn(z):
        return 1.0 / (z - c)

    total = adaptive_circle_sum(fn, 0.0, 0.4, tol=1e-12)
    assert abs(total - 2j * np.pi) < 1e-10
