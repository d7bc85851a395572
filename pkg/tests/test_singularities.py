"""Branch collisions: locating them and fitting the blow-up exponent."""

import numpy as np
import pytest

from blochdirac import (ValidationError, classify, critical_points,
                        exceptional_quasimomenta, fit_blowup_exponent,
                        scan_window)

T_STAR = float(np.sqrt(0.07))   # the constant potential collides here


def test_fit_recovers_synthetic_power_law():
    radii = np.geomspace(1e-2, 1e-5, 8)
    alphas = 3.7 * radii ** 0.5
    beta, resid = fit_blowup_exponent(radii, alphas)
    assert beta == pytest.approx(0.5, abs=1e-12)
    assert resid < 1e-12
    with pytest.raises(ValidationError):
        fit_blowup_exponent([1e-3], [1.0])


def test_critical_points_constant_potential(const_spec):
    # F is even in lambda for a constant potential, so F' vanishes only at
    # the origin inside a small window
    pts = critical_points(const_spec, -0.6, 0.6, -0.4, 0.4)
    assert len(pts) == 1
    assert abs(pts[0]) < 1e-8


def test_exceptional_quasimomenta_constant(const_spec):
    ts = exceptional_quasimomenta(const_spec, 0.0)
    ts = sorted(ts, key=lambda z: z.real)
    assert len(ts) == 2
    assert abs(ts[0] + T_STAR) < 1e-10
    assert abs(ts[1] - T_STAR) < 1e-10


def test_classify_interior_collision(const_spec):
    rec = classify(const_spec, T_STAR, 0.0)
    assert rec.m == 2
    assert rec.kind == "spectral_singularity"
    assert rec.exponent_fit == pytest.approx(0.5, abs=0.05)
    assert not rec.direction_dependent


def test_classify_simple_eigenvalue(const_spec):
    # any regular point of a branch is recorded as simple, no fit attempted
    lam = np.sqrt(complex(0.3 ** 2 - 0.07))
    rec = classify(const_spec, 0.3, lam)
    assert rec.m == 1 and rec.kind == "simple"
    assert rec.exponent_fit is None


def test_classify_rejects_non_eigenvalue(const_spec):
    with pytest.raises(ValidationError):
        classify(const_spec, 0.3, 5.0 + 3.0j)


def test_zero_potential_degenerate_points_not_ess(zero_spec):
    rec = classify(zero_spec, 0.0, 0.0)
    assert rec.m == 2
    assert rec.kind == "not_ess"
    assert abs(rec.exponent_fit) < 0.02


def test_scan_window_constant(const_spec):
    recs = scan_window(const_spec, -0.6, 0.6, -0.4, 0.4)
    assert len(recs) == 2
    assert {r.kind for r in recs} == {"spectral_singularity"}
    assert sorted(round(r.t0.real, 6) for r in recs) == [
        -round(T_STAR, 6), round(T_STAR, 6)]
    for r in recs:
        assert abs(r.lambda0) < 1e-8
        assert r.m == 2


def test_tuned_interior_collision(tuned_collision):
    spec, t0, lam0 = tuned_collision
    rec = classify(spec, t0, lam0)
    assert rec.m == 2
    assert rec.kind == "spectral_singularity"
    assert rec.exponent_fit == pytest.approx(0.5, abs=0.05)
