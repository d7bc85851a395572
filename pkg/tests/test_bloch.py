"""Bloch eigenvalues: labeling, dispersion oracles, windows, tracking."""

import numpy as np
import pytest

import oracles
from blochdirac import (QuasimomentumDomain, ValidationError, multiplicity,
                        solve_eigenvalue, spectrum_window, track_branch)
from blochdirac.bloch import newton_refine, roots_in_disk


def test_domain_validation():
    with pytest.raises(ValidationError):
        QuasimomentumDomain(0.2)
    with pytest.raises(ValidationError):
        QuasimomentumDomain(0.0)
    dom = QuasimomentumDomain(0.05)
    assert dom.contains_regular(0.5)
    assert not dom.contains_regular(0.02)   # inside the guard disk at 0
    assert not dom.contains_regular(3.0)


def test_zero_potential_labels_are_exact(zero_spec):
    t = 0.37
    for n in (-3, 0, 2):
        for j, want in ((1, 2 * n + t), (2, 2 * n - t)):
            ev = solve_eigenvalue(zero_spec, t, n, j)
            assert abs(ev.lam - want) < 1e-12
            assert ev.residual < 1e-10
            assert ev.multiplicity == 1


def test_constant_potential_dispersion(const_spec):
    for t in (0.25, 0.6 + 0.1j):
        for n in (-4, -1, 1, 5):
            for j in (1, 2):
                ev = solve_eigenvalue(const_spec, t, n, j)
                assert oracles.dispersion_residual(ev.lam, n, j, t, 0.3, 0.4j) < 1e-10
                want = oracles.dispersion_value(n, j, t, 0.3, 0.4j)
                assert abs(ev.lam - want) < 1e-9


def test_guard_disk_rejected_without_flag(zero_spec):
    with pytest.raises(ValidationError):
        solve_eigenvalue(zero_spec, 1e-9, 0, 1)
    # explicitly allowed when the degenerate machinery is intended
    ev = solve_eigenvalue(zero_spec, 0.0, 1, 1, allow_degenerate=True)
    assert abs(ev.lam - 2.0) < 1e-10


def test_spectrum_window_complete_and_labeled(step_spec):
    N = 4
    evs = spectrum_window(step_spec, 0.3, N)
    assert len(evs) == 2 * (2 * N + 1)
    labels = {(e.n, e.j) for e in evs}
    assert labels == {(n, j) for n in range(-N, N + 1) for j in (1, 2)}
    assert max(e.residual for e in evs) < 1e-9
    # same call again is deterministic
    evs2 = spectrum_window(step_spec, 0.3, N)
    assert all(e1.lam == e2.lam for e1, e2 in zip(evs, evs2))


def test_spectrum_window_complex_t(step_spec):
    evs = spectrum_window(step_spec, 0.5 + 0.2j, 3)
    assert len(evs) == 14
    assert max(e.residual for e in evs) < 1e-9


def test_roots_in_disk_finds_split_pair(step_spec):
    roots = roots_in_disk(step_spec, 0.0, 0.0, 0.8)
    assert len(roots) == 2
    assert all(m == 1 for _, m in roots)
    lams = sorted((r for r, _ in roots), key=lambda z: z.real)
    assert abs(lams[0] + lams[1]) < 1e-8   # the pair is symmetric about 0


def test_multiplicity_simple_and_double(const_spec):
    # interior collision of the constant potential: both branches meet at 0
    t_star = np.sqrt(0.07)
    assert multiplicity(const_spec, t_star, 0.0) == 2
    ev = solve_eigenvalue(const_spec, 0.3, 1, 1)
    assert multiplicity(const_spec, 0.3, ev.lam) == 1


def test_newton_refine_vectorized(const_spec):
    t = 0.3
    centers = np.array([2 * n + t for n in range(-5, 6)], dtype=complex)
    lam, res, conv = newton_refine(const_spec, t, centers)
    assert conv.all()
    assert res.max() < 1e-10
    for n, l in zip(range(-5, 6), lam):
        assert oracles.dispersion_residual(l, n, 1, t, 0.3, 0.4j) < 1e-9


def test_track_branch_continuous_and_consistent(step_spec):
    path = np.linspace(0.2, 0.8, 25)
    evs = track_branch(step_spec, path, 1, 1)
    lams = np.array([e.lam for e in evs])
    steps = np.abs(np.diff(lams))
    assert steps.max() < 0.2
    end = solve_eigenvalue(step_spec, 0.8, 1, 1)
    assert abs(lams[-1] - end.lam) < 1e-9
