"""Potential specs: evaluation, adjoint, variation, config round-trips."""

import json

import numpy as np
import pytest

from blochdirac import (PERIOD, ValidationError, adjoint_potential,
                        eval_potential, fourier_potential, load_potential,
                        piecewise_potential, potential_from_config,
                        potential_to_config, scale_potential, total_variation,
                        zero_potential)


def test_zero_potential_evaluates_to_zero_matrix(zero_spec):
    Q = eval_potential(zero_spec, 1.0)
    assert np.array_equal(Q, np.zeros((2, 2)))


def test_constant_potential_matrix_layout(const_spec):
    for x in (0.0, 0.7, 3.1):
        Q = eval_potential(const_spec, x)
        assert np.allclose(Q, [[0.3, 0.4j], [0.4j, -0.3]])


def test_step_potential_piece_values(step_spec):
    Q1 = eval_potential(step_spec, np.pi / 4)
    assert np.allclose(Q1, [[0.5, 0.1], [0.1, -0.5]])
    Q2 = eval_potential(step_spec, 3 * np.pi / 4)
    assert np.allclose(Q2, [[-0.5 + 0.2j, 0.1], [0.1, 0.5 - 0.2j]])


def test_evaluation_is_periodic_traceless_symmetric():
    spec = fourier_potential(p=[(1, 0.2 - 0.1j)], q=[(0, 0.3), (-2, 1j)])
    x = np.linspace(0.0, PERIOD, 17)
    Q = eval_potential(spec, x)
    Qs = eval_potential(spec, x + PERIOD)
    assert np.allclose(Q, Qs, atol=1e-14)
    assert np.allclose(Q[..., 0, 0] + Q[..., 1, 1], 0.0, atol=1e-15)
    assert np.allclose(Q[..., 0, 1], Q[..., 1, 0], atol=1e-15)


def test_adjoint_is_pointwise_conjugate():
    for spec in (fourier_potential(p=[(1, 2 + 1j)], q=[(0, 0.5j), (3, -1.0)]),
                 piecewise_potential([(0, "1/3", 1j, 0.2),
                                      ("1/3", 1, -0.4, 1 - 1j)])):
        adj = adjoint_potential(spec)
        x = np.linspace(0.0, PERIOD, 23)
        assert np.allclose(eval_potential(adj, x),
                           np.conjugate(eval_potential(spec, x)), atol=1e-14)


def test_adjoint_of_real_spec_is_identity(zero_spec):
    assert adjoint_potential(zero_spec) == zero_spec


def test_total_variation_zero_and_jumps(zero_spec, step_spec):
    assert total_variation(zero_spec) == 0.0
    # p jumps twice by |1 - 0.2i| (interior and wrap-around), q never jumps
    assert total_variation(step_spec) == pytest.approx(2.0 * abs(1 - 0.2j), rel=1e-14)


def test_total_variation_single_harmonic():
    spec = fourier_potential(q=[(1, 0.25)])
    # |d/dx 0.25 e^{2ix}| = 0.5, integrated over [0, pi]
    assert total_variation(spec) == pytest.approx(0.5 * PERIOD, rel=1e-6)


def test_scale_potential(const_spec):
    doubled = scale_potential(const_spec, 2.0)
    assert np.allclose(eval_potential(doubled, 0.3),
                       2.0 * eval_potential(const_spec, 0.3))


def test_config_round_trip_piecewise(step_spec):
    cfg = potential_to_config(step_spec)
    back = potential_from_config(json.loads(json.dumps(cfg)))
    assert back == step_spec


def test_config_round_trip_fourier():
    spec = fourier_potential(p=[(0, 0.3)], q=[(2, 1 - 2j)])
    back = potential_from_config(json.loads(json.dumps(potential_to_config(spec))))
    assert back == spec


def test_load_potential_reads_json_file(tmp_path, const_spec):
    path = tmp_path / "pot.json"
    path.write_text(json.dumps(potential_to_config(const_spec)))
    assert load_potential(str(path)) == const_spec


def test_overlapping_pieces_rejected():
    with pytest.raises(ValidationError):
        piecewise_potential([(0, "2/3", 0.1, 0.0), ("1/3", 1, 0.2, 0.0)])


def test_gap_in_partition_rejected():
    with pytest.raises(ValidationError):
        piecewise_potential([(0, "1/3", 0.1, 0.0), ("1/2", 1, 0.2, 0.0)])


def test_unknown_config_kind_rejected():
    with pytest.raises(ValidationError):
        potential_from_config({"kind": "splines"})
