"""End-to-end acceptance checks, one test per headline claim.

The heavyweight checks share one session-scoped noisy suite run (see
conftest); its wall-clock duration feeds the runtime budget assertion of
the noisy-fidelity criterion, so this module is intentionally first in
alphabetical collection order.
"""

import numpy as np

from epencircle import tomolab
from epencircle.dynamics import BranchLabel, quasistatic_track
from epencircle.harness import PRESET_IDS
from epencircle.model import NHParams, PathSpec, eigensystem

SUITE_TIME_BUDGET_S = 120.0


def test_criterion_01_ep_degeneracy():
    es = eigensystem(NHParams(delta=0.0, g=1.0, gamma=1.0))
    assert abs(es.e_alpha - es.e_beta) <= 1e-12
    assert es.degenerate
    coalesced = np.array([1.0, -1.0j]) / np.sqrt(2.0)
    assert 1.0 - abs(np.vdot(coalesced, es.v_alpha)) <= 1e-10
    assert 1.0 - abs(np.vdot(coalesced, es.v_beta)) <= 1e-10


def test_criterion_02_quasistatic_swap_and_return():
    one = quasistatic_track(PathSpec(), loops=1)
    assert one.swapped
    two = quasistatic_track(PathSpec(), loops=2)
    for branch in (0, 1):
        assert abs(two.values[branch, -1] - two.values[branch, 0]) < 1e-6


def test_criterion_03_asymmetric_mode_switch(suite_reports):
    for preset in ("A-cw-alpha", "A-cw-beta"):
        ms = suite_reports[preset].mode_switch
        assert ms.final_label is BranchLabel.BETA
        assert ms.final_overlap >= 0.99
    for preset in ("A-ccw-alpha", "A-ccw-beta"):
        ms = suite_reports[preset].mode_switch
        assert ms.final_label is BranchLabel.ALPHA
        assert ms.final_overlap >= 0.99


def test_criterion_04_symmetric_mode_switch(suite_reports):
    for preset in PRESET_IDS:
        if not preset.startswith("B"):
            continue
        ms = suite_reports[preset].mode_switch
        assert ms.final_label is BranchLabel.ALPHA
        assert ms.final_overlap >= 0.99


def test_criterion_05_dilation_equivalence(suite_reports):
    for preset in PRESET_IDS:
        report = suite_reports[preset]
        assert np.min(report.f_recover_chi) >= 0.999, preset
        assert np.min(report.f_recover_minus) >= 0.999, preset


def test_criterion_06_gauge_feasibility(suite_reports):
    for preset in PRESET_IDS:
        assert suite_reports[preset].min_lmin_metric >= 1e-3, preset


def test_criterion_07_projection_probability_dip(suite_reports):
    assert suite_reports["B-cw-alpha"].min_p_minus >= 1e-2
    dip = suite_reports["B-cw-beta"].min_p_minus
    assert 1e-5 <= dip <= 1e-3


def test_criterion_08_pulse_roundtrip(suite_reports):
    for preset in PRESET_IDS:
        assert suite_reports[preset].pulse_roundtrip_err <= 1e-10, preset


def test_criterion_09_tomography_roundtrip():
    rng = np.random.default_rng(0)
    pl = tomolab.PLModel()
    for _ in range(1000):
        a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        rho = a @ a.conj().T
        rho /= np.real(np.trace(rho))
        e = tomolab.simulate_readout(rho, pl)
        block = np.array([[rho[0, 0], rho[0, 2]], [rho[2, 0], rho[2, 2]]])
        closed = tomolab.invert_readout(e, pl)
        assert np.max(np.abs(closed - block)) <= 1e-10
        assert np.max(np.abs(tomolab.lsq_invert(e, pl) - closed)) <= 1e-8


def test_criterion_10_mle_physicality():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        h = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        h = 0.5 * (h + h.conj().T) + np.eye(4)
        proj = tomolab.mle_project(h)
        w = np.linalg.eigvalsh(proj)
        assert w.min() >= -1e-12
        assert abs(np.real(np.trace(proj)) - 1.0) <= 1e-12
        assert np.max(np.abs(tomolab.mle_project(proj) - proj)) <= 1e-12


def test_criterion_11_noisy_fidelity_band(noisy_suite):
    result, duration = noisy_suite
    assert duration < SUITE_TIME_BUDGET_S
    values = np.array([[row[2], row[3]] for row in result.table])
    assert 0.95 <= float(values.mean()) <= 1.0
    assert float(values.max()) <= 1.0 + 1e-12
    assert float(values.min()) >= 0.94
