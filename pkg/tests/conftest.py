"""Shared fixtures: the full noisy suite is expensive, so it runs once.

The suite fixture records its wall-clock duration; the acceptance test
for the noisy fidelity band checks that duration against its budget, so
the suite must be the first heavyweight computation of the session (test
files are collected alphabetically, which places the acceptance module
first).
"""

import time

import pytest

from epencircle.harness import RunConfig, SuiteResult, run_suite


@pytest.fixture(scope="session")
def noisy_suite() -> tuple[SuiteResult, float]:
    t0 = time.monotonic()
    result = run_suite(RunConfig())
    return result, time.monotonic() - t0


@pytest.fixture(scope="session")
def suite_reports(noisy_suite):
    result, _ = noisy_suite
    return {report.case_id: report for report in result.reports}
