"""Closed-form spectrum checked against direct matrix diagonalization."""

import csv

import numpy as np
import pytest

from epencircle import model


def test_eigenvalue_matches_matrix_oracle():
    rng = np.random.default_rng(0)
    for _ in range(200):
        params = model.NHParams(
            delta=rng.uniform(-2, 2), g=rng.uniform(0, 2), gamma=rng.uniform(0.5, 2)
        )
        e = complex(model.eigenvalue_plus(params.delta, params.g, params.gamma))
        ref = np.linalg.eigvals(model.hamiltonian(params))
        assert min(abs(ref - e)) < 1e-10
        assert min(abs(ref + e)) < 1e-10


def test_eigensystem_vectors_satisfy_eigenequation():
    rng = np.random.default_rng(1)
    for _ in range(100):
        params = model.NHParams(delta=rng.uniform(-2, 2), g=rng.uniform(0.1, 2))
        es = model.eigensystem(params)
        h = model.hamiltonian(params)
        for val, vec in ((es.e_alpha, es.v_alpha), (es.e_beta, es.v_beta)):
            assert np.linalg.norm(h @ vec - val * vec) < 1e-9


def test_alpha_branch_has_larger_imaginary_part_when_broken():
    es = model.eigensystem(model.NHParams(delta=0.0, g=0.5))
    assert es.phase is model.PTPhase.PT_BROKEN
    assert es.e_alpha.imag > es.e_beta.imag


def test_real_spectrum_tie_broken_by_real_part():
    es = model.eigensystem(model.NHParams(delta=0.0, g=1.5))
    assert es.phase is model.PTPhase.PT_SYMMETRIC
    assert es.e_alpha.real > 0


def test_path_start_points():
    a = model.path_point(model.PathSpec(theta0=0.0), 0.0)
    b = model.path_point(model.PathSpec(theta0=np.pi), 0.0)
    assert a.delta == pytest.approx(0.0) and a.g == pytest.approx(1.5)
    assert b.delta == pytest.approx(0.0, abs=1e-15) and b.g == pytest.approx(0.5)


def test_loop_closes():
    path = model.PathSpec()
    p0 = model.path_point(path, 0.0)
    p1 = model.path_point(path, path.period_T)
    assert p0.delta == pytest.approx(p1.delta, abs=1e-12)
    assert p0.g == pytest.approx(p1.g, abs=1e-12)


def test_riemann_sample_grid_and_csv(tmp_path):
    rows = model.riemann_sample((-1, 1), (0, 2), 11, 13)
    assert rows.shape == (11 * 13, 6)
    target = tmp_path / "grid.csv"
    model.write_riemann_csv(rows, target)
    with open(target) as fh:
        data = list(csv.reader(fh))
    assert data[0] == model.RIEMANN_CSV_HEADER
    assert len(data) == 11 * 13 + 1
    assert float(data[1][0]) == rows[0, 0]
