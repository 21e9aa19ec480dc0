"""Pulse synthesis, reconstruction, and the RWA surrogate check."""

import types

import numpy as np
import pytest
from scipy.interpolate import CubicSpline

from epencircle import nvcontrol as nv
from epencircle.dilation import assemble_hsa


def synthetic_trace(n=60, t_end=15.0, seed=0):
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, t_end, n)
    a = rng.normal(size=(n, 4)) * 5.0
    b = rng.normal(size=(n, 4)) * 5.0
    # Include a sample with zero transverse drive (phase convention edge).
    a[3, 1] = a[3, 2] = b[3, 1] = b[3, 2] = 0.0
    trace = types.SimpleNamespace(times=t, a_coeffs=a, b_coeffs=b)
    trace.coeff_spline = lambda: CubicSpline(t, np.concatenate([a, b], axis=1), axis=0)
    return trace


def test_constants_derive_zeeman_shifts():
    c = nv.NVConstants()
    assert c.omega_e == pytest.approx(1.4012)
    assert c.omega_n == pytest.approx(153.85)
    override = nv.NVConstants(omega_e=1.5)
    assert override.omega_e == 1.5


def test_subspace_h0_traceless_and_splitting():
    c = nv.NVConstants()
    h0 = nv.nv_subspace_h0(c)
    assert np.allclose(h0, np.diag(np.diag(h0)))
    assert abs(np.trace(h0)) < 1e-9
    split = abs((h0[0, 0] - h0[2, 2]).real)
    assert split == pytest.approx(
        2.0 * np.pi * (c.d_mhz - c.omega_e_mhz - c.A_hf), rel=1e-12
    )


def test_carriers_match_transition_frequencies():
    c = nv.NVConstants()
    mw1, mw2 = nv.carrier_freqs(c)
    assert mw1 / (2.0 * np.pi) == pytest.approx(1470.96)
    assert mw2 / (2.0 * np.pi) == pytest.approx(1468.8)
    assert (mw2 - mw1) / (2.0 * np.pi) == pytest.approx(c.A_hf)


def test_synthesis_reconstruction_roundtrip():
    trace = synthetic_trace()
    wave = nv.synth_pulses(trace)
    carriers = nv.carrier_freqs(nv.NVConstants())
    worst = 0.0
    for j in range(len(trace.times)):
        h = nv.reconstruct_hrot(
            wave,
            j,
            trace.a_coeffs[j, 0],
            trace.a_coeffs[j, 3],
            trace.b_coeffs[j, 0],
            trace.b_coeffs[j, 3],
            carriers,
        )
        ref = assemble_hsa(trace.a_coeffs[j], trace.b_coeffs[j])
        worst = max(worst, float(np.max(np.abs(h - ref))))
    assert worst < 1e-10


def test_waveform_invariants():
    wave = nv.synth_pulses(synthetic_trace())
    assert np.all(wave.amp1 >= 0.0) and np.all(wave.amp2 >= 0.0)
    for phi in (wave.phi1, wave.phi2):
        assert np.all(phi > -np.pi) and np.all(phi <= np.pi)
    # Zero transverse drive maps to zero amplitude and zero phase.
    assert wave.amp1[3] == 0.0 and wave.phi1[3] == 0.0


def test_channel_symmetry_without_ancilla_coupling():
    trace = synthetic_trace()
    trace.b_coeffs[:, 1] = 0.0
    trace.b_coeffs[:, 2] = 0.0
    wave = nv.synth_pulses(trace)
    assert np.allclose(wave.amp1, wave.amp2)
    assert np.allclose(wave.phi1, wave.phi2)


def test_detuning_antisymmetry_without_system_z():
    trace = synthetic_trace()
    trace.a_coeffs[:, 3] = 0.0
    wave = nv.synth_pulses(trace)
    mw1, mw2 = nv.carrier_freqs(nv.NVConstants())
    assert np.allclose((wave.omega1 - mw1) + (wave.omega2 - mw2), 0.0, atol=1e-12)


def test_reconstruct_rejects_carrier_mismatch():
    trace = synthetic_trace()
    wave = nv.synth_pulses(trace)
    carriers = nv.carrier_freqs(nv.NVConstants())
    with pytest.raises(nv.FrequencyMismatch):
        nv.reconstruct_hrot(
            wave,
            0,
            trace.a_coeffs[0, 0],
            trace.a_coeffs[0, 3] + 1e-6,
            trace.b_coeffs[0, 0],
            trace.b_coeffs[0, 3],
            carriers,
        )


def test_rwa_deficit_shrinks_with_carrier_scale():
    n = 101
    t = np.linspace(0.0, 2.0, n)
    a = np.zeros((n, 4))
    b = np.zeros((n, 4))
    a[:, 1] = 1.0
    trace = types.SimpleNamespace(times=t, a_coeffs=a, b_coeffs=b)
    trace.coeff_spline = lambda: CubicSpline(t, np.concatenate([a, b], axis=1), axis=0)
    d1 = nv.rwa_validate(trace, 0.01)
    d2 = nv.rwa_validate(trace, 0.02)
    assert d1 < 1e-3
    assert d2 < d1 / 2.0


def test_rwa_rejects_small_separation():
    n = 11
    t = np.linspace(0.0, 1.0, n)
    a = np.zeros((n, 4))
    a[:, 1] = 100.0
    trace = types.SimpleNamespace(times=t, a_coeffs=a, b_coeffs=np.zeros((n, 4)))
    with pytest.raises(nv.SeparationTooSmall):
        nv.rwa_validate(trace, 0.01)


def test_export_roundtrip(tmp_path):
    wave = nv.synth_pulses(synthetic_trace())
    json_path = tmp_path / "wave.json"
    nv.export_waveform(wave, json_path, fmt="json", constants=nv.NVConstants())
    back = nv.import_waveform(json_path)
    assert np.array_equal(back.amp1, wave.amp1)
    assert np.array_equal(back.phi2, wave.phi2)
    csv_path = tmp_path / "wave.csv"
    nv.export_waveform(wave, csv_path, fmt="csv")
    header = open(csv_path).readline().strip().split(",")
    assert header == nv.WAVEFORM_CSV_HEADER
    with pytest.raises(ValueError):
        nv.export_waveform(wave, tmp_path / "wave.xml", fmt="xml")
