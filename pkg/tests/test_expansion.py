"""Spectral expansion: fibers, coefficients, contours, reconstruction."""

import json

import numpy as np
import pytest

import oracles
from blochdirac import (ValidationError, build_contour, coefficient,
                        expand_reconstruct, fiber_residual, gaussian_bump,
                        hat_bump, panel_grid_for, raised_cosine)
from blochdirac.expansion import (ContourPiece, paired_term_integral,
                                  periodize, term_integral)
from blochdirac.quadrature import build_panel_grid


def test_profiles_vanish_outside_support():
    for f in (raised_cosine(0.5, 2.5), gaussian_bump(1.0, 2.0), hat_bump(0.2, 0.9)):
        a, b = f.support
        assert np.all(f(np.array([a - 0.1, a, b, b + 0.1])) == 0.0)
        mid = f(np.array([0.5 * (a + b)]))
        assert np.all(np.abs(mid) > 0)


def test_profile_validation():
    with pytest.raises(ValidationError):
        raised_cosine(2.0, 1.0)
    with pytest.raises(ValidationError):
        from blochdirac.expansion import TestFunction
        TestFunction("sinc", (0.0, 1.0))


def test_periodize_matches_brute_shift_sum():
    f = raised_cosine(0.5, 2.5)
    x = np.linspace(0.0, np.pi, 41)
    for t in (0.3, 0.7 - 0.2j):
        got = periodize(f, t, x)
        want = np.zeros(x.shape + (2,), dtype=complex)
        for k in range(-4, 5):
            want += np.exp(-1j * np.pi * k * t) * f(x + np.pi * k)
        assert np.max(np.abs(got - want)) < 1e-14
        # quasi-periodicity across one period
        lhs = periodize(f, t, x + np.pi)
        assert np.max(np.abs(lhs - np.exp(1j * np.pi * t) * got)) < 1e-12


def test_zero_potential_coefficients_are_fourier_transforms(zero_spec):
    f = raised_cosine(0.5, 2.5)
    for t in (0.3, 0.45 + 0.1j):
        for n, j in ((0, 1), (1, 2), (-2, 1), (3, 2)):
            # the folded profile is only C^1 at the support edges, so the
            # quadrature grid must break there for full accuracy
            grid = panel_grid_for(zero_spec, abs(2 * n) + 3.0,
                                  extra_breaks=(0.5, 2.5))
            got = coefficient(zero_spec, f, t, n, j, grid=grid)
            want = oracles.zero_coefficient(f, n, j, t)
            assert abs(got - want) < 1e-10


def test_fiber_residual_decreases_with_window(zero_spec):
    f = raised_cosine(0.5, 2.5)
    r1 = fiber_residual(zero_spec, f, 0.3, 8)
    r2 = fiber_residual(zero_spec, f, 0.3, 16)
    assert r2 < r1 < 0.1


def test_contour_layout_and_exclusions(const_spec):
    c = build_contour(const_spec, 0.05, 8, quality="coarse")
    kinds = sorted(p.kind for p in c.pieces)
    assert kinds.count("interval") == 2
    assert any(p.kind in ("segment", "detour") for p in c.pieces)
    # the interior collision of the constant potential is routed around
    assert any(abs(e - np.sqrt(0.07)) < 1e-6 for e in c.excluded)
    assert any(abs(e - (2.0 - np.sqrt(0.07))) < 1e-6 for e in c.excluded)


def test_contour_validation(zero_spec):
    with pytest.raises(ValidationError):
        build_contour(zero_spec, 0.2, 8)
    with pytest.raises(ValidationError):
        build_contour(zero_spec, 0.05, 8, quality="ultra")


def test_paired_equals_sum_of_singles(step_spec):
    """Grouped projection route vs plain per-branch route, same interval."""
    f = raised_cosine(0.5, 2.5)
    x_eval = np.linspace(0.0, 3.0, 31)
    center, h = 1.0, 0.05
    paired, _ = paired_term_integral(step_spec, f, [(0, 1), (1, 2)], center,
                                     h, x_eval, quality="coarse")
    breaks = np.linspace(center - h, center + h, 9)
    gt = build_panel_grid(breaks, 10)
    piece = ContourPiece(name="probe", kind="interval", t_nodes=gt.nodes,
                         t_weights=gt.weights, order=10, breaks=breaks)
    singles = (term_integral(step_spec, f, 0, 1, piece, x_eval)
               + term_integral(step_spec, f, 1, 2, piece, x_eval))
    assert np.max(np.abs(paired - singles)) < 1e-10


def test_reconstruction_zero_potential_small(zero_spec):
    f = raised_cosine(0.5, 2.5)
    xs = np.linspace(0.0, 3.0, 61)
    rep = expand_reconstruct(zero_spec, f, 0.05, 8, xs, n_tail=4,
                             quality="draft")
    assert rep.rel_l2_error < 2e-3
    assert rep.counts["degenerate_groups"] == 0
    # the report serializes to plain JSON
    doc = json.dumps(rep.to_dict(include_samples=True))
    back = json.loads(doc)
    assert back["n_max"] == 8
    assert back["rel_l2_error"] == rep.rel_l2_error
    assert len(back["reconstruction"]) == xs.size


def test_reconstruction_is_deterministic(zero_spec):
    f = raised_cosine(0.5, 2.5)
    xs = np.linspace(0.0, 3.0, 31)
    r1 = expand_reconstruct(zero_spec, f, 0.05, 6, xs, n_tail=3, quality="draft")
    r2 = expand_reconstruct(zero_spec, f, 0.05, 6, xs, n_tail=3, quality="draft")
    assert r1.rel_l2_error == r2.rel_l2_error
    assert np.array_equal(r1.reconstruction, r2.reconstruction)


def test_reconstruction_validation(zero_spec):
    f = raised_cosine(0.5, 2.5)
    xs = np.linspace(0.0, 3.0, 11)
    with pytest.raises(ValidationError):
        expand_reconstruct(zero_spec, f, 0.3, 8, xs)
    with pytest.raises(ValidationError):
        expand_reconstruct(zero_spec, f, 0.05, 8, xs, quality="nope")
