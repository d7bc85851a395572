"""Eigenfunction pairs, biorthogonality, resolvent, projections."""

import numpy as np
import pytest

import oracles
from blochdirac import (eigen_residual, inner, normalized_pair,
                        panel_grid_for, resolvent_apply, solve_eigenvalue,
                        total_projection, twisted_norm)
from blochdirac.eigensystem import NearSingularError, resolvent_apply_batch
from blochdirac.expansion import periodize, raised_cosine
from blochdirac.quadrature import panel_derivative

J = np.array([[0.0, 1.0], [-1.0, 0.0]], dtype=complex)


@pytest.fixture(scope="module")
def zero_grid(zero_spec):
    return panel_grid_for(zero_spec, 8.0)


def test_zero_modes_match_closed_form(zero_spec, zero_grid):
    """Both members of the pair coincide with the plane-wave modes, and the
    biorthogonality constant is exactly 1 for the free operator."""
    t = 0.31
    for n, j in ((0, 1), (2, 2), (-1, 1)):
        ev = solve_eigenvalue(zero_spec, t, n, j)
        tri = normalized_pair(zero_spec, t, ev.lam, n, j, zero_grid)
        want = oracles.zero_mode(n, j, t, zero_grid.nodes)
        assert np.max(np.abs(tri.psi - want)) < 1e-12
        assert np.max(np.abs(tri.psi_star - want)) < 1e-12
        assert abs(tri.alpha - 1.0) < 1e-12
        assert tri.residual < 1e-9
        assert tri.adjoint_mismatch < 1e-10


def test_twisted_normalization(step_spec):
    t = 0.4 + 0.1j
    grid = panel_grid_for(step_spec, 8.0)
    ev = solve_eigenvalue(step_spec, t, 1, 1)
    tri = normalized_pair(step_spec, t, ev.lam, 1, 1, grid)
    assert twisted_norm(grid, t, tri.psi) == pytest.approx(1.0, abs=1e-10)
    assert twisted_norm(grid, np.conjugate(t), tri.psi_star) == pytest.approx(1.0, abs=1e-10)


def test_biorthogonality_step_potential(step_spec):
    t = 0.3
    grid = panel_grid_for(step_spec, 10.0)
    trips = []
    for n in (-2, -1, 0, 1, 2):
        for j in (1, 2):
            ev = solve_eigenvalue(step_spec, t, n, j)
            trips.append(normalized_pair(step_spec, t, ev.lam, n, j, grid))
    for a in trips:
        for b in trips:
            pair_ab = inner(grid, a.psi, b.psi_star)
            if (a.n, a.j) == (b.n, b.j):
                assert abs(pair_ab - a.alpha) < 1e-10
            else:
                assert abs(pair_ab) < 1e-10


def test_eigen_residual_detects_wrong_lambda(step_spec):
    grid = panel_grid_for(step_spec, 8.0)
    ev = solve_eigenvalue(step_spec, 0.3, 1, 1)
    tri = normalized_pair(step_spec, 0.3, ev.lam, 1, 1, grid)
    assert eigen_residual(step_spec, ev.lam, grid, tri.psi) < 1e-9
    assert eigen_residual(step_spec, ev.lam + 0.05, grid, tri.psi) > 1e-3


def test_resolvent_solves_the_shifted_system(zero_spec, step_spec):
    """(L_t - lam) applied to the resolvent output returns f."""
    t = 0.31
    for spec in (zero_spec, step_spec):
        grid = panel_grid_for(spec, 8.0)
        lam = 0.5 + 0.8j
        f_vals = np.stack([np.sin(grid.nodes), np.cos(2 * grid.nodes)],
                          axis=-1).astype(complex)
        u = resolvent_apply(spec, t, lam, f_vals, grid)
        du = np.moveaxis(panel_derivative(grid, np.moveaxis(u, -1, 0)), 0, -1)
        from blochdirac.potential import eval_potential
        Q = eval_potential(spec, grid.nodes)
        r = du @ J.T + np.einsum("xab,xb->xa", Q, u) - lam * u
        assert np.max(np.abs(r - f_vals)) < 1e-9


def test_resolvent_batch_matches_scalar(step_spec):
    grid = panel_grid_for(step_spec, 8.0)
    f_vals = np.stack([np.exp(1j * grid.nodes), np.ones_like(grid.nodes)],
                      axis=-1).astype(complex)
    lams = np.array([0.5 + 0.8j, -1.0 + 0.3j])
    batch = resolvent_apply_batch(step_spec, 0.31, lams, f_vals, grid)
    for k, lam in enumerate(lams):
        single = resolvent_apply(step_spec, 0.31, complex(lam), f_vals, grid)
        assert np.max(np.abs(batch[k] - single)) < 1e-12


def test_resolvent_refuses_near_eigenvalue(step_spec):
    # the Newton root carries ~1e-12 residual, so widen the guard to make
    # the characteristic factor test it deterministically
    grid = panel_grid_for(step_spec, 8.0)
    ev = solve_eigenvalue(step_spec, 0.31, 0, 1)
    f_vals = np.ones((grid.nodes.size, 2), dtype=complex)
    with pytest.raises(NearSingularError):
        resolvent_apply(step_spec, 0.31, ev.lam, f_vals, grid, near_tol=1e-8)


def test_projection_equals_rank_one_term(step_spec):
    """Riesz projection through a circle around one simple eigenvalue equals
    the explicit rank-one expression built from the eigenfunction pair."""
    t = 0.3
    n, j = 1, 1
    grid = panel_grid_for(step_spec, 8.0)
    ev = solve_eigenvalue(step_spec, t, n, j)
    tri = normalized_pair(step_spec, t, ev.lam, n, j, grid)

    f = raised_cosine(0.5, 2.5)
    f_t = periodize(f, t, grid.nodes)
    proj = total_projection(step_spec, t, f_t, ev.lam, 0.3, grid)
    want = (inner(grid, f_t, tri.psi_star) / tri.alpha) * tri.psi
    assert np.max(np.abs(proj - want)) < 1e-10
