"""Fundamental solutions and the discriminant against independent routes."""

import numpy as np
import pytest

import oracles
from blochdirac import (MonodromyCache, ValidationError, constant_potential,
                        discriminant, discriminant_batch,
                        discriminant_derivative, fprime_batch, monodromy,
                        panel_grid_for, propagate)

RNG = np.random.default_rng(20260816)


def test_constant_propagator_matches_scipy_expm(const_spec):
    """Dual route: closed-form piece exponential vs generic scipy expm."""
    xs = np.array([0.0, 0.4, 1.1, np.pi])
    for lam in (0.3, 2.0 - 0.7j, -5.5 + 0.2j, 17.0):
        batch = propagate(const_spec, np.array([lam]), xs)
        for k, x in enumerate(xs):
            want = oracles.const_propagator(0.3, 0.4j, lam, x)
            assert np.max(np.abs(batch.Y[0, k] - want)) < 1e-12


def test_piecewise_monodromy_matches_expm_product(step_spec):
    pieces = [(0, 0.5, 0.5, 0.1), (0.5, 1, -0.5 + 0.2j, 0.1)]
    for lam in (0.0, 1.7, -3.2 + 0.4j, 8.0 - 0.1j):
        Y = monodromy(step_spec, np.array([lam]))[0]
        want = oracles.piecewise_monodromy(pieces, lam)
        assert np.max(np.abs(Y - want)) < 1e-12


def test_backends_agree_on_the_same_potential():
    """The same constant potential through both integration backends."""
    exact = constant_potential(0.3, 0.4j, kind="piecewise")
    rk = constant_potential(0.3, 0.4j, kind="fourier")
    lam = np.array([0.5, 3.0 - 0.4j, -7.1 + 0.3j])
    F_exact = discriminant_batch(exact, lam)
    F_rk = discriminant_batch(rk, lam)
    assert np.max(np.abs(F_exact - F_rk)) < 1e-9


def test_wronskian_residual_small(step_spec):
    lam = RNG.uniform(-9, 9, 24) + 1j * RNG.uniform(-0.5, 0.5, 24)
    grid = panel_grid_for(step_spec, 10.0)
    batch = propagate(step_spec, lam, grid.nodes)
    assert batch.wronskian_residual() < 1e-12


def test_discriminant_closed_form_constant(const_spec):
    lam = RNG.uniform(-9, 9, 40) + 1j * RNG.uniform(-1.0, 1.0, 40)
    F = discriminant_batch(const_spec, lam)
    want = np.array([oracles.const_discriminant(0.3, 0.4j, l) for l in lam])
    assert np.max(np.abs(F - want)) < 1e-11


def test_derivative_closed_form_constant(const_spec):
    lam = RNG.uniform(-6, 6, 25) + 1j * RNG.uniform(-0.4, 0.4, 25)
    Fp = fprime_batch(const_spec, lam)
    want = np.array([oracles.const_discriminant_derivative(0.3, 0.4j, l)
                     for l in lam])
    assert np.max(np.abs(Fp - want)) < 1e-9


def test_derivative_matches_central_difference(step_spec):
    def F(z):
        return complex(discriminant_batch(step_spec, np.array([z]))[0])

    for lam in (0.9, 2.3 - 0.2j, -4.4 + 0.3j):
        quad = complex(fprime_batch(step_spec, np.array([lam]))[0])
        fd = oracles.central_difference(F, lam)
        assert abs(quad - fd) / abs(fd) < 1e-8


def test_discriminant_sample_bundles_everything(const_spec):
    s = discriminant(const_spec, 1.3 - 0.1j)
    assert s.lam == 1.3 - 0.1j
    assert abs(s.F - oracles.const_discriminant(0.3, 0.4j, s.lam)) < 1e-11
    assert abs(s.F_prime
               - oracles.const_discriminant_derivative(0.3, 0.4j, s.lam)) < 1e-9
    assert s.wronskian_residual < 1e-12


def test_discriminant_derivative_wrapper(const_spec):
    lam = 0.4 + 0.2j
    assert discriminant_derivative(const_spec, lam) == pytest.approx(
        complex(fprime_batch(const_spec, np.array([lam]))[0]))


def test_monodromy_cache_consistent(step_spec):
    cache = MonodromyCache(step_spec)
    lam = np.array([0.3, 1.0 - 0.5j, 0.3])
    fresh = monodromy(step_spec, lam)
    assert np.array_equal(cache.monodromy(lam), fresh)
    # second call hits the cache and must return identical values
    assert np.array_equal(cache.monodromy(lam), fresh)


def test_entire_in_lambda_no_branch_seam(const_spec):
    """F is entire: values straddling the omega branch cut must agree with
    the closed form, which is even in omega."""
    # omega^2 = lam^2 + 0.07 crosses zero near lam = i sqrt(0.07)
    lam0 = 1j * np.sqrt(0.07)
    for eps in (1e-3, 1e-6, 1e-9):
        for lam in (lam0 + eps, lam0 - eps, lam0 + 1j * eps, lam0 - 1j * eps):
            F = complex(discriminant_batch(const_spec, np.array([lam]))[0])
            assert abs(F - oracles.const_discriminant(0.3, 0.4j, lam)) < 1e-12


def test_propagate_rejects_bad_grids(const_spec):
    with pytest.raises(ValidationError):
        propagate(const_spec, np.array([1.0]), np.array([0.5, 0.2]))
    with pytest.raises(ValidationError):
        propagate(const_spec, np.array([1.0]), np.array([0.0, 4.0]))


def test_panel_grid_bucketing_shares_grids(step_spec):
    g1 = panel_grid_for(step_spec, 10.0)
    g2 = panel_grid_for(step_spec, 10.4)
    assert g1 is g2
    g3 = panel_grid_for(step_spec, 40.0)
    assert g3.nodes.size > g1.nodes.size
