"""Photoluminescence readout model and tomographic state reconstruction.

Eight readout settings (combinations of nuclear/electron flips and
electron pi/2 rotations) turn the four diagonal populations and the one
coherence of interest of the dilated 4x4 density matrix into
photoluminescence (PL) levels.  The closed-form inversion recovers the
2x2 block spanned by levels 1 and 3 (the ancilla-|0> subspace), which
maps back to the encircling state through ``(I - i eta)^{-1}``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dilation import DilationTrace, assemble_hsa
from .numerics import psd_sqrt

# Smallest PL-level contrast accepted by the closed-form inversion.
MIN_PL_CONTRAST = 1e-6
# Design-matrix condition number ceiling for the least-squares inversion.
LSQ_COND_MAX = 1e12
# Traces below this are rejected as an unnormalizable (zero) state.
ZERO_TRACE_TOL = 1e-14
# Inhomogeneous dephasing time (us) and the quasi-static detuning model.
T2_STAR_DEFAULT = 36.0

# Diagonal of the detuning generator delta * sigma_z (x) I / 2 in the
# four-level basis (system qubit on the left).
DETUNING_DIAG = np.array([0.5, 0.5, -0.5, -0.5])


class DegeneratePL(Exception):
    """PL levels too close for the closed-form inversion."""


class RankDeficient(Exception):
    """Least-squares readout design matrix is numerically rank deficient."""


class ZeroState(Exception):
    """Density matrix with (numerically) zero trace."""


@dataclass(frozen=True)
class PLModel:
    """PL levels of the four basis states and the shot-noise scale.

    Levels are normalized to the brightest state; ``shot_noise_sigma`` is
    the standard deviation of additive Gaussian noise per readout value.
    """

    l01: float = 1.00
    l00: float = 0.95
    lm11: float = 0.70
    lm10: float = 0.72
    shot_noise_sigma: float = 0.0

    def __post_init__(self) -> None:
        if self.shot_noise_sigma < 0:
            raise ValueError("shot_noise_sigma must be nonnegative")

    @property
    def levels(self) -> np.ndarray:
        return np.array([self.l01, self.l00, self.lm11, self.lm10])

    def contrasts(self) -> tuple[float, float, float]:
        """The three level differences the inversion divides by."""
        return (self.l01 - self.l00, self.l01 - self.lm11, self.l00 - self.lm10)


def _population_rows(rho: np.ndarray) -> np.ndarray:
    """Effective populations seen by the eight readout settings (8, 4)."""
    p = np.real(np.diag(rho))
    re13 = float(np.real(rho[0, 2]))
    im13 = float(np.imag(rho[0, 2]))
    avg = 0.5 * (p[0] + p[2])
    return np.array(
        [
            [p[0], p[1], p[2], p[3]],
            [p[2], p[1], p[0], p[3]],
            [p[0], p[3], p[2], p[1]],
            [p[1], p[0], p[2], p[3]],
            [avg - re13, p[1], avg + re13, p[3]],
            [avg + re13, p[1], avg - re13, p[3]],
            [avg - im13, p[1], avg + im13, p[3]],
            [avg + im13, p[1], avg - im13, p[3]],
        ]
    )


def simulate_readout(
    rho: np.ndarray, pl: PLModel = PLModel(), rng: np.random.Generator | None = None
) -> np.ndarray:
    """Expected PL values of the eight readout settings (plus shot noise)."""
    rho = np.asarray(rho)
    if rho.shape != (4, 4):
        raise ValueError("rho must be 4x4")
    e = _population_rows(rho) @ pl.levels
    if pl.shot_noise_sigma > 0:
        if rng is None:
            rng = np.random.default_rng()
        e = e + pl.shot_noise_sigma * rng.standard_normal(8)
    return e


def invert_readout(e: np.ndarray, pl: PLModel = PLModel()) -> np.ndarray:
    """Closed-form 2x2 block [[rho11, rho13], [rho31, rho33]] from PL values.

    Exact for noiseless input with unit trace; the block trace
    ``rho11 + rho33`` is the ancilla-|0>-like subspace weight, not 1.
    """
    e = np.asarray(e, dtype=float)
    if e.shape != (8,):
        raise ValueError("expected 8 readout values")
    d12, d13, d24 = pl.contrasts()
    if min(abs(d12), abs(d13), abs(d24)) < MIN_PL_CONTRAST:
        raise DegeneratePL(
            f"PL contrasts {(d12, d13, d24)} below {MIN_PL_CONTRAST:.1e}"
        )
    common = (e[0] - e[3]) / (2.0 * d12) + (e[0] - e[2]) / (4.0 * d24)
    rho11 = 0.25 + common + (e[0] - e[1]) / (4.0 * d13)
    rho33 = 0.25 + common - 3.0 * (e[0] - e[1]) / (4.0 * d13)
    rho13 = (e[5] - e[4] + 1j * (e[7] - e[6])) / (2.0 * d13)
    return np.array([[rho11, rho13], [np.conj(rho13), rho33]])


def lsq_invert(e: np.ndarray, pl: PLModel = PLModel()) -> np.ndarray:
    """Least-squares variant of :func:`invert_readout`.

    Solves for the four populations and the complex coherence under the
    exact unit-trace constraint (the fourth population is eliminated).
    Agrees with the closed form on noiseless data and averages
    inconsistencies on noisy data.
    """
    e = np.asarray(e, dtype=float)
    if e.shape != (8,):
        raise ValueError("expected 8 readout values")
    l1, l2, l3, l4 = pl.levels
    half13 = 0.5 * (l1 + l3)
    # Rows: coefficients of (p1, p2, p3, p4, re13, im13).
    design = np.array(
        [
            [l1, l2, l3, l4, 0.0, 0.0],
            [l3, l2, l1, l4, 0.0, 0.0],
            [l1, l4, l3, l2, 0.0, 0.0],
            [l2, l1, l3, l4, 0.0, 0.0],
            [half13, l2, half13, l4, l3 - l1, 0.0],
            [half13, l2, half13, l4, l1 - l3, 0.0],
            [half13, l2, half13, l4, 0.0, l3 - l1],
            [half13, l2, half13, l4, 0.0, l1 - l3],
        ]
    )
    # Impose p1 + p2 + p3 + p4 = 1 exactly by eliminating p4.
    reduced = np.column_stack(
        [design[:, k] - design[:, 3] for k in range(3)] + [design[:, 4], design[:, 5]]
    )
    if np.linalg.cond(reduced) > LSQ_COND_MAX:
        raise RankDeficient("readout design matrix is numerically rank deficient")
    x, *_ = np.linalg.lstsq(reduced, e - design[:, 3], rcond=None)
    rho13 = x[3] + 1j * x[4]
    return np.array([[x[0], rho13], [np.conj(rho13), x[2]]])


def chi_to_psi(
    rho_chi: np.ndarray,
    eta: np.ndarray | None = None,
    recovery_op: np.ndarray | None = None,
) -> np.ndarray:
    """Undo the ancilla dressing: rho_psi proportional to K rho_chi K^dag.

    ``K = (I - i eta)^{-1}`` may be passed directly as ``recovery_op``
    when it was computed alongside the metric (its entries stay bounded
    even when eta spans huge scales).
    """
    if recovery_op is None:
        if eta is None:
            raise ValueError("provide eta or recovery_op")
        recovery_op = np.linalg.inv(np.eye(2) - 1j * np.asarray(eta))
    rho = recovery_op @ np.asarray(rho_chi) @ np.conj(recovery_op.T)
    tr = float(np.real(np.trace(rho)))
    if tr < ZERO_TRACE_TOL:
        raise ZeroState(f"recovered trace {tr:.3e} below {ZERO_TRACE_TOL:.1e}")
    return rho / tr


def _simplex_projection(w: np.ndarray) -> np.ndarray:
    """Euclidean projection of a real vector onto the probability simplex."""
    u = np.sort(w)[::-1]
    css = np.cumsum(u)
    ks = np.arange(1, len(w) + 1)
    mask = u + (1.0 - css) / ks > 0
    k = int(ks[mask][-1])
    lam = (1.0 - css[k - 1]) / k
    return np.maximum(w + lam, 0.0)


def mle_project(rho: np.ndarray) -> np.ndarray:
    """Nearest physical density matrix: Hermitian, unit trace, PSD.

    Hermitizes, trace-normalizes, then projects the spectrum onto the
    probability simplex (negative weight is redistributed over the
    remaining eigenvalues).  Idempotent on physical states.
    """
    rho = np.asarray(rho, dtype=complex)
    herm = 0.5 * (rho + np.conj(rho.T))
    tr = float(np.real(np.trace(herm)))
    if abs(tr) < ZERO_TRACE_TOL:
        raise ZeroState(f"trace {tr:.3e} too small to normalize")
    herm = herm / tr
    w, v = np.linalg.eigh(herm)
    w = _simplex_projection(w)
    return (v * w[None, :]) @ np.conj(v.T)


def _as_density(state: np.ndarray) -> np.ndarray:
    state = np.asarray(state, dtype=complex)
    if state.ndim == 1:
        return np.outer(state, np.conj(state))
    return state


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    """Squared Uhlmann fidelity; accepts state vectors or density matrices.

    Reduces to ``<psi|rho|psi>`` when one input is pure and to
    ``|<psi|phi>|^2`` when both are.
    """
    ra, rb = _as_density(a), _as_density(b)
    if ra.shape == (2, 2):
        f = float(np.real(np.trace(ra @ rb))) + 2.0 * float(
            np.real(np.sqrt(np.linalg.det(ra) * np.linalg.det(rb) + 0j))
        )
    else:
        sa = psd_sqrt(ra)
        w = np.linalg.eigvalsh(sa @ rb @ sa)
        f = float(np.sum(np.sqrt(np.clip(w, 0.0, None)))) ** 2
    return float(np.clip(f, 0.0, 1.0))


def detuning_sigma(t2_star: float = T2_STAR_DEFAULT) -> float:
    """Quasi-static detuning spread (rad/us) for a Gaussian-decay T2*."""
    if t2_star <= 0:
        raise ValueError("t2_star must be positive")
    return float(np.sqrt(2.0)) / t2_star


@dataclass(frozen=True)
class DephasingResult:
    """Replica-averaged density matrices at selected trace samples."""

    times: np.ndarray
    rho: np.ndarray  # (m, 4, 4)
    deltas: np.ndarray  # (n_replicas,) sampled detunings, rad/us


def dephasing_replicas(
    trace: DilationTrace,
    psi_full0: np.ndarray,
    n_replicas: int = 200,
    seed: int = 0,
    t2_star: float = T2_STAR_DEFAULT,
    sample_indices: np.ndarray | None = None,
) -> DephasingResult:
    """Quasi-static dephasing average of the dilated evolution.

    Each replica evolves under ``H_sa(t) + delta * sigma_z (x) I / 2``
    with a fixed Gaussian detuning ``delta``; replicas are propagated in
    one batch by second-order operator splitting on the trace grid, with
    the detuning phases applied as half-step diagonal factors.  The
    detuning draw is keyed by ``seed`` alone, so replica k is the same
    regardless of batch size changes upstream.
    """
    if n_replicas < 1:
        raise ValueError("n_replicas must be positive")
    times = trace.times
    n = len(times)
    if sample_indices is None:
        sample_indices = np.array([n - 1])
    sample_indices = np.asarray(sample_indices, dtype=int)
    record = {int(j): k for k, j in enumerate(sample_indices)}

    rng = np.random.Generator(np.random.Philox(key=seed))
    deltas = detuning_sigma(t2_star) * rng.standard_normal(n_replicas)

    coeffs = np.concatenate([trace.a_coeffs, trace.b_coeffs], axis=1)
    dt = times[1] - times[0]
    half = np.exp(-1j * np.outer(deltas, DETUNING_DIAG) * (dt / 2.0))

    states = np.tile(np.asarray(psi_full0, dtype=complex), (n_replicas, 1))
    rho_out = np.empty((len(sample_indices), 4, 4), dtype=complex)
    t_out = times[sample_indices]

    def accumulate(step: int) -> None:
        k = record.get(step)
        if k is not None:
            rho_out[k] = np.einsum("ra,rb->ab", states, np.conj(states)) / n_replicas

    accumulate(0)
    for step in range(n - 1):
        c_mid = 0.5 * (coeffs[step] + coeffs[step + 1])
        h = assemble_hsa(c_mid[:4], c_mid[4:])
        w, v = np.linalg.eigh(h)
        u0 = (v * np.exp(-1j * w * dt)[None, :]) @ np.conj(v.T)
        states = ((states * half) @ u0.T) * half
        accumulate(step + 1)
    return DephasingResult(t_out, rho_out, deltas)
