"""Readout simulation/inversion, MLE projection, and dephasing replicas."""

import types

import numpy as np
import pytest
from scipy.interpolate import CubicSpline

from epencircle import tomolab as tl


def random_density(rng, n=4):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = a @ a.conj().T
    return rho / np.real(np.trace(rho))


def block_13(rho):
    return np.array([[rho[0, 0], rho[0, 2]], [rho[2, 0], rho[2, 2]]])


def test_inversion_roundtrip_random_states():
    rng = np.random.default_rng(0)
    pl = tl.PLModel()
    for _ in range(300):
        rho = random_density(rng)
        e = tl.simulate_readout(rho, pl)
        rec = tl.invert_readout(e, pl)
        assert np.max(np.abs(rec - block_13(rho))) < 1e-10


def test_lsq_agrees_with_closed_form():
    rng = np.random.default_rng(1)
    pl = tl.PLModel()
    for _ in range(100):
        e = tl.simulate_readout(random_density(rng), pl)
        assert np.max(np.abs(tl.lsq_invert(e, pl) - tl.invert_readout(e, pl))) < 1e-8


def test_lsq_averages_noise_consistently():
    rng = np.random.default_rng(2)
    pl = tl.PLModel(shot_noise_sigma=0.01)
    rho = random_density(rng)
    e = tl.simulate_readout(rho, pl, rng=rng)
    rec = tl.lsq_invert(e, pl)
    # Hermitian by construction even on noisy data.
    assert np.allclose(rec, rec.conj().T)


def test_shot_noise_determinism():
    pl = tl.PLModel(shot_noise_sigma=0.05)
    rho = random_density(np.random.default_rng(3))
    e1 = tl.simulate_readout(rho, pl, rng=np.random.default_rng(7))
    e2 = tl.simulate_readout(rho, pl, rng=np.random.default_rng(7))
    assert np.array_equal(e1, e2)


def test_degenerate_pl_rejected():
    with pytest.raises(tl.DegeneratePL):
        tl.invert_readout(np.zeros(8), tl.PLModel(l01=0.95))


def test_rank_deficient_design_rejected():
    with pytest.raises(tl.RankDeficient):
        tl.lsq_invert(np.zeros(8), tl.PLModel(l01=0.7, l00=0.7, lm11=0.7, lm10=0.7))


def test_chi_to_psi_undoes_dressing():
    rng = np.random.default_rng(4)
    eta = np.array([[2.0, 0.3], [0.3, 1.0]])
    psi = rng.normal(size=2) + 1j * rng.normal(size=2)
    psi = psi / np.linalg.norm(psi)
    chi = (np.eye(2) - 1j * eta) @ psi
    rho_psi = tl.chi_to_psi(np.outer(chi, chi.conj()), eta=eta)
    assert tl.fidelity(rho_psi, psi) == pytest.approx(1.0, abs=1e-12)


def test_chi_to_psi_rejects_zero_state():
    with pytest.raises(tl.ZeroState):
        tl.chi_to_psi(np.zeros((2, 2)), eta=np.eye(2))


def test_mle_redistributes_negative_weight():
    proj = tl.mle_project(np.diag([1.2, -0.2]).astype(complex))
    assert np.allclose(np.diag(proj).real, [1.0, 0.0], atol=1e-14)


def test_mle_physical_and_idempotent():
    rng = np.random.default_rng(5)
    for _ in range(200):
        h = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        h = 0.5 * (h + h.conj().T) + np.eye(4)
        proj = tl.mle_project(h)
        w = np.linalg.eigvalsh(proj)
        assert w.min() >= -1e-12
        assert np.real(np.trace(proj)) == pytest.approx(1.0, abs=1e-12)
        assert np.max(np.abs(tl.mle_project(proj) - proj)) < 1e-12


def test_fidelity_conventions():
    psi = np.array([1.0, 0.0])
    phi = np.array([1.0, 1.0]) / np.sqrt(2.0)
    assert tl.fidelity(psi, phi) == pytest.approx(0.5)
    rho = np.outer(phi, phi.conj())
    assert tl.fidelity(rho, phi) == pytest.approx(1.0)
    assert tl.fidelity(np.eye(4) / 4.0, np.eye(4) / 4.0) == pytest.approx(1.0)
    assert tl.fidelity(np.eye(2) / 2.0, psi) == pytest.approx(0.5)


def _free_evolution_trace(t_end=10.0, n=2001):
    times = np.linspace(0.0, t_end, n)
    zeros = np.zeros((n, 4))
    return types.SimpleNamespace(times=times, a_coeffs=zeros, b_coeffs=zeros.copy())


def test_dephasing_gaussian_coherence_decay():
    """With no Hamiltonian, the averaged system coherence must decay as
    exp(-(t/T2*)^2) under the quasi-static Gaussian detuning model."""
    trace = _free_evolution_trace()
    psi0 = np.array([1.0, 0.0, 1.0, 0.0]) / np.sqrt(2.0)
    idx = np.array([0, 1000, 2000])
    res = tl.dephasing_replicas(trace, psi0, n_replicas=4000, seed=11, sample_indices=idx)
    for k, j in enumerate(idx):
        t = trace.times[j]
        expected = 0.5 * np.exp(-((t / tl.T2_STAR_DEFAULT) ** 2))
        assert np.real(res.rho[k][0, 2]) == pytest.approx(expected, abs=0.01)


def test_dephasing_determinism():
    trace = _free_evolution_trace(t_end=1.0, n=101)
    psi0 = np.array([0.5, 0.5, 0.5, 0.5])
    r1 = tl.dephasing_replicas(trace, psi0, n_replicas=50, seed=3)
    r2 = tl.dephasing_replicas(trace, psi0, n_replicas=50, seed=3)
    assert np.array_equal(r1.rho, r2.rho)
    assert np.array_equal(r1.deltas, r2.deltas)


def test_detuning_sigma_value():
    assert tl.detuning_sigma(36.0) == pytest.approx(np.sqrt(2.0) / 36.0)
    with pytest.raises(ValueError):
        tl.detuning_sigma(0.0)
