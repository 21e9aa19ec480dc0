"""Dilation construction checked against a double-precision oracle.

The production trace builder runs in extended precision because the
metric becomes exponentially ill-conditioned over the full loop.  On a
short, mildly driven segment double precision is adequate, so the two
paths can be compared directly there.
"""

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from epencircle import dilation
from epencircle.model import PathSpec, hamiltonian, path_point
from epencircle.numerics import IntegratorConfig

MILD_PATH = PathSpec(period_T=2.0, kappa=0.8)
MILD_CFG = dilation.DilationConfig(n_steps=2000)


@pytest.fixture(scope="module")
def mild_trace():
    return dilation.dilation_trace(MILD_PATH, MILD_CFG)


def test_initial_state_projection_probability():
    psi0 = np.array([1.0, 0.0])
    full = dilation.dilate_initial_state(psi0)
    p_minus = np.sum(np.abs(dilation.minus_projection(full)) ** 2)
    assert p_minus == pytest.approx(2.0 / 3.0, abs=1e-12)


def test_ancilla_kets_are_orthonormal():
    assert abs(np.vdot(dilation.MINUS_KET, dilation.PLUS_KET)) < 1e-15
    assert np.linalg.norm(dilation.MINUS_KET) == pytest.approx(1.0)
    assert np.linalg.norm(dilation.PLUS_KET) == pytest.approx(1.0)


def test_minus_projection_extracts_component():
    psi = np.array([0.3 + 0.1j, -0.4j])
    psi = psi / np.linalg.norm(psi)
    full = np.kron(psi, dilation.MINUS_KET)
    assert np.allclose(dilation.minus_projection(full), psi, atol=1e-14)
    full_plus = np.kron(psi, dilation.PLUS_KET)
    assert np.linalg.norm(dilation.minus_projection(full_plus)) < 1e-14


def test_trace_matches_double_precision_oracle(mild_trace):
    """Integrate the gauged metric in double precision and rebuild Lambda,
    Gamma at a few samples via the plain-numpy reference helpers."""
    trace = mild_trace
    spline = trace.gauge_spline

    def rhs(t, y):
        m = y.reshape(2, 2)
        hs = hamiltonian(path_point(MILD_PATH, t))
        b = -0.5 * float(spline(t, 1))
        dm = -2.0 * b * m + 1j * MILD_PATH.kappa * (m @ hs - hs.conj().T @ m)
        return dm.ravel()

    m0 = 1.5 * np.eye(2, dtype=complex)
    sol = solve_ivp(
        rhs,
        (0.0, MILD_PATH.period_T),
        m0.ravel(),
        t_eval=trace.times,
        rtol=1e-11,
        atol=1e-13,
    )
    for j in range(0, len(trace.times), 200):
        m = sol.y[:, j].reshape(2, 2)
        b = float(trace.b[j])
        eta, eta_dot = dilation.eta_and_derivative(m, rhs(trace.times[j], m.ravel()).reshape(2, 2))
        hs = hamiltonian(path_point(MILD_PATH, trace.times[j]))
        lam, gamma = dilation.lambda_gamma(eta, eta_dot, hs, b, MILD_PATH.kappa)
        assert np.allclose(
            dilation.pauli_coefficients(lam), trace.a_coeffs[j], atol=2e-6
        )
        assert np.allclose(
            dilation.pauli_coefficients(gamma), trace.b_coeffs[j], atol=2e-6
        )
        assert np.allclose(trace.eta[j], eta, atol=1e-6)


def test_internal_consistency_residuals(mild_trace):
    assert mild_trace.herm_defect_max < 1e-25
    assert mild_trace.eta_sq_defect_max < 1e-25


def test_gauge_floor_and_spline_consistency(mild_trace):
    trace = mild_trace
    assert np.min(trace.lmin_M_minus_I) >= trace.config.gauge.eps_floor * 0.999
    # exp(-2 int b) must reproduce G; the residual here is the trapezoid
    # quadrature error, second order in the sample spacing.
    integral = np.concatenate(
        [[0.0], np.cumsum(0.5 * (trace.b[1:] + trace.b[:-1]) * np.diff(trace.times))]
    )
    assert np.max(np.abs(-2.0 * integral - trace.ln_G)) < 1e-5
    assert trace.ln_G[0] == pytest.approx(0.0, abs=1e-12)


def test_hsa_assembly_structure():
    a = np.array([0.1, 0.2, -0.3, 0.4])
    b = np.array([-0.5, 0.6, 0.7, -0.8])
    h = dilation.assemble_hsa(a, b)
    assert np.allclose(h, h.conj().T)
    lam = sum(c * s for c, s in zip(a, dilation.PAULI))
    gamma = sum(c * s for c, s in zip(b, dilation.PAULI))
    ref = np.kron(lam, np.eye(2)) + np.kron(gamma, dilation.SIGMA_Z)
    assert np.allclose(h, ref)


def test_evolution_unitary_and_recovery(mild_trace):
    trace = mild_trace
    psi0 = np.array([1.0, 0.0])
    full0 = dilation.dilate_initial_state(psi0)
    dil = dilation.evolve_dilated(trace, full0, IntegratorConfig(rtol=1e-12, atol=1e-14))
    assert dil.norm_drift() < 1e-8
    assert np.all(dil.p_minus > 0.0) and np.all(dil.p_minus <= 1.0 + 1e-12)
    chi_route, minus_route = dilation.recover_psi(dil.states[-1], trace.recovery[-1])
    overlap = abs(np.vdot(chi_route, minus_route))
    assert overlap >= 1.0 - 1e-6


def test_recovered_state_matches_direct_integration(mild_trace):
    from epencircle.dynamics import integrate_nh

    trace = mild_trace
    psi0 = np.array([1.0, 0.0])
    nh = integrate_nh(trace.path, psi0, t_eval=trace.times)
    full0 = dilation.dilate_initial_state(psi0)
    dil = dilation.evolve_dilated(trace, full0)
    for j in (len(trace.times) // 2, len(trace.times) - 1):
        chi_route, _ = dilation.recover_psi(dil.states[j], trace.recovery[j])
        assert abs(np.vdot(chi_route, nh.states[j])) ** 2 >= 1.0 - 1e-8


def test_config_validation():
    with pytest.raises(ValueError):
        dilation.DilationConfig(n_steps=50)
    with pytest.raises(ValueError):
        dilation.DilationConfig(n_steps=1000, store_every=3)
    with pytest.raises(ValueError):
        dilation.GaugeSchedule(eps_floor=0.0)


def test_trace_csv(tmp_path, mild_trace):
    target = tmp_path / "trace.csv"
    mild_trace.to_csv(target)
    header = open(target).readline().strip().split(",")
    assert header == dilation.DILATION_CSV_HEADER
