"""NV-center hardware mapping for the dilated Hamiltonian.

The four-level subspace {|0,1>, |0,0>, |-1,1>, |-1,0>} (electron spin
ms = 0/-1 as the left qubit, nitrogen nuclear spin mI = 1/0 as the right
qubit) hosts two selective microwave transitions.  Driving each with its
own amplitude/frequency/phase waveform realizes an arbitrary target
``Lambda (x) I + Gamma (x) sigma_z`` in the rotating frame.

Units: all internal frequencies are rad/us.  NVConstants fields keep the
conventional lab units (GHz, MHz, kHz, Gauss) and are converted once on
ingestion.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dilation import DilationTrace, assemble_hsa
from .numerics import SIGMA_X, SIGMA_Y, SIGMA_Z, IntegratorConfig, integrate_ode

# Electron gyromagnetic ratio (MHz per Gauss) and 14N nuclear ratio (kHz
# per Gauss) used to derive the Zeeman shifts when not overridden.
ELECTRON_GAMMA_MHZ_PER_G = 2.8024
NUCLEAR_GAMMA_KHZ_PER_G = 0.3077

# Carrier consistency threshold for waveform reconstruction (rad/us).
FREQ_MATCH_TOL = 1e-9
# Minimum carrier / drive-amplitude ratio for a meaningful RWA check.
RWA_MIN_SEPARATION = 20.0

TWO_PI = 2.0 * np.pi

WAVEFORM_CSV_HEADER = ["t_us", "omega1", "Omega1", "phi1", "omega2", "Omega2", "phi2"]
WAVEFORM_SCHEMA_VERSION = "1"

# Nuclear-spin projectors in the ancilla qubit basis (index 0 = |1>n).
PROJ_N1 = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)
PROJ_N0 = np.array([[0.0, 0.0], [0.0, 1.0]], dtype=complex)


class FrequencyMismatch(Exception):
    """Waveform carrier does not match the supplied sigma-z coefficients."""


class SeparationTooSmall(Exception):
    """Scaled carriers are too close to the drive amplitudes for an RWA check."""


@dataclass(frozen=True)
class NVConstants:
    """Static NV parameters.  ``omega_e``/``omega_n`` derive from B_field
    via the gyromagnetic ratios when left as None."""

    D: float = 2.87  # GHz, zero-field splitting
    Q: float = -4.95  # MHz, quadrupole
    A_hf: float = -2.16  # MHz, hyperfine
    B_field: float = 500.0  # Gauss
    omega_e: float | None = None  # GHz
    omega_n: float | None = None  # kHz

    def __post_init__(self) -> None:
        if self.omega_e is None:
            object.__setattr__(
                self, "omega_e", ELECTRON_GAMMA_MHZ_PER_G * self.B_field / 1000.0
            )
        if self.omega_n is None:
            object.__setattr__(
                self, "omega_n", NUCLEAR_GAMMA_KHZ_PER_G * self.B_field
            )
        if self.D <= 0:
            raise ValueError("D must be positive")
        if self.B_field > 0 and self.omega_e <= 0:
            raise ValueError("omega_e must be positive for positive B_field")

    @property
    def d_mhz(self) -> float:
        return self.D * 1000.0

    @property
    def omega_e_mhz(self) -> float:
        return self.omega_e * 1000.0

    @property
    def omega_n_mhz(self) -> float:
        return self.omega_n / 1000.0


def nv_subspace_h0(c: NVConstants) -> np.ndarray:
    """Static subspace Hamiltonian (rad/us), diagonal in the level basis."""
    sz_i = np.diag([1.0, 1.0, -1.0, -1.0])
    i_sz = np.diag([1.0, -1.0, 1.0, -1.0])
    sz_sz = np.diag([1.0, -1.0, -1.0, 1.0])
    a = c.A_hf
    return np.pi * (
        -(c.d_mhz - c.omega_e_mhz - a / 2.0) * sz_i
        + (c.Q + c.omega_n_mhz - a / 2.0) * i_sz
        + (a / 2.0) * sz_sz
    ).astype(complex)


def carrier_freqs(c: NVConstants) -> tuple[float, float]:
    """Selective transition carriers (rad/us): MW1 drives the nuclear-|1>
    manifold, MW2 the nuclear-|0> manifold."""
    omega_mw1 = TWO_PI * (c.d_mhz - c.omega_e_mhz - c.A_hf)
    omega_mw2 = TWO_PI * (c.d_mhz - c.omega_e_mhz)
    return omega_mw1, omega_mw2


@dataclass(frozen=True)
class PulseWaveform:
    """Two-channel microwave drive sampled on a common grid.

    Amplitudes and angular frequencies are rad/us; phases lie in
    (-pi, pi].  Channel 1 (2) is resonant with the nuclear-spin |1> (|0>)
    manifold.
    """

    times: np.ndarray
    omega1: np.ndarray
    amp1: np.ndarray
    phi1: np.ndarray
    omega2: np.ndarray
    amp2: np.ndarray
    phi2: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.times)
        for name in ("omega1", "amp1", "phi1", "omega2", "amp2", "phi2"):
            if len(getattr(self, name)) != n:
                raise ValueError("channels must share the sample grid")
        if len(self.times) and (np.min(self.amp1) < 0 or np.min(self.amp2) < 0):
            raise ValueError("amplitudes must be nonnegative")


def _phase(y: np.ndarray, x: np.ndarray) -> np.ndarray:
    """-atan2(y, x) mapped into (-pi, pi], with -atan2(0, 0) = 0."""
    phi = -np.arctan2(y, x)
    phi = np.where(phi <= -np.pi, phi + TWO_PI, phi)
    return phi + 0.0  # normalize -0.0


def synth_pulses(trace: DilationTrace, c: NVConstants = NVConstants()) -> PulseWaveform:
    """Per-sample waveform synthesis from the dilation coupling coefficients.

    Channel 1 realizes the sum combination (A_i + B_i), channel 2 the
    difference; the sigma-z coefficients become carrier detunings.
    """
    omega_mw1, omega_mw2 = carrier_freqs(c)
    a = trace.a_coeffs
    b = trace.b_coeffs
    x1, y1 = a[:, 1] + b[:, 1], a[:, 2] + b[:, 2]
    x2, y2 = a[:, 1] - b[:, 1], a[:, 2] - b[:, 2]
    return PulseWaveform(
        times=trace.times.copy(),
        omega1=omega_mw1 + 2.0 * (a[:, 3] + b[:, 3]),
        amp1=2.0 * np.hypot(x1, y1),
        phi1=_phase(y1, x1),
        omega2=omega_mw2 + 2.0 * (a[:, 3] - b[:, 3]),
        amp2=2.0 * np.hypot(x2, y2),
        phi2=_phase(y2, x2),
    )


def reconstruct_hrot(
    wave: PulseWaveform,
    index: int,
    a0: float,
    a3: float,
    b0: float,
    b3: float,
    carriers: tuple[float, float],
) -> np.ndarray:
    """Rotating-frame Hamiltonian implied by one waveform sample.

    The sigma-z-type coefficients (a0, a3, b0, b3) come from the frame
    and detuning bookkeeping; the waveform carriers are cross-checked
    against (a3, b3) before the transverse blocks are assembled.
    """
    omega_mw1, omega_mw2 = carriers
    d1 = wave.omega1[index] - (omega_mw1 + 2.0 * (a3 + b3))
    d2 = wave.omega2[index] - (omega_mw2 + 2.0 * (a3 - b3))
    if abs(d1) > FREQ_MATCH_TOL or abs(d2) > FREQ_MATCH_TOL:
        raise FrequencyMismatch(
            f"carrier offsets ({d1:.3e}, {d2:.3e}) exceed {FREQ_MATCH_TOL:.1e} rad/us"
        )
    ident = np.eye(2)
    diag = (
        a0 * np.kron(ident, ident)
        + a3 * np.kron(SIGMA_Z, ident)
        + b0 * np.kron(ident, SIGMA_Z)
        + b3 * np.kron(SIGMA_Z, SIGMA_Z)
    )
    h1 = 0.5 * wave.amp1[index] * (
        np.cos(wave.phi1[index]) * SIGMA_X - np.sin(wave.phi1[index]) * SIGMA_Y
    )
    h2 = 0.5 * wave.amp2[index] * (
        np.cos(wave.phi2[index]) * SIGMA_X - np.sin(wave.phi2[index]) * SIGMA_Y
    )
    return diag + np.kron(h1, PROJ_N1) + np.kron(h2, PROJ_N0)


def reconstruct_series(
    wave: PulseWaveform,
    a0: np.ndarray,
    a3: np.ndarray,
    b0: np.ndarray,
    b3: np.ndarray,
    carriers: tuple[float, float],
) -> np.ndarray:
    """Vectorized :func:`reconstruct_hrot` over every waveform sample.

    Returns an ``(n, 4, 4)`` stack; carrier consistency is checked for
    all samples before assembly.
    """
    omega_mw1, omega_mw2 = carriers
    d1 = wave.omega1 - (omega_mw1 + 2.0 * (a3 + b3))
    d2 = wave.omega2 - (omega_mw2 + 2.0 * (a3 - b3))
    worst = max(np.max(np.abs(d1)), np.max(np.abs(d2)))
    if worst > FREQ_MATCH_TOL:
        raise FrequencyMismatch(
            f"carrier offset {worst:.3e} exceeds {FREQ_MATCH_TOL:.1e} rad/us"
        )
    ident = np.eye(2)
    basis = np.stack(
        [
            np.kron(ident, ident),
            np.kron(SIGMA_Z, ident),
            np.kron(ident, SIGMA_Z),
            np.kron(SIGMA_Z, SIGMA_Z),
            np.kron(SIGMA_X, PROJ_N1),
            np.kron(SIGMA_Y, PROJ_N1),
            np.kron(SIGMA_X, PROJ_N0),
            np.kron(SIGMA_Y, PROJ_N0),
        ]
    )
    coeffs = np.stack(
        [
            a0,
            a3,
            b0,
            b3,
            0.5 * wave.amp1 * np.cos(wave.phi1),
            -0.5 * wave.amp1 * np.sin(wave.phi1),
            0.5 * wave.amp2 * np.cos(wave.phi2),
            -0.5 * wave.amp2 * np.sin(wave.phi2),
        ],
        axis=1,
    )
    return np.einsum("nk,kab->nab", coeffs, basis)


def rwa_validate(
    trace: DilationTrace,
    carrier_scale: float,
    cfg: IntegratorConfig = IntegratorConfig(),
    psi0: np.ndarray | None = None,
) -> float:
    """Max fidelity deficit of the RWA against the counter-rotating drive.

    Runs at carriers scaled down by ``carrier_scale`` (a desk-scale
    surrogate for GHz carriers): the rotating-frame Hamiltonian keeps its
    RWA part and regains the per-channel counter-rotating terms at twice
    the scaled carrier phase.
    """
    if not 0 < carrier_scale <= 1:
        raise ValueError("carrier_scale must lie in (0, 1]")
    carriers = carrier_freqs(NVConstants())
    scaled = (carrier_scale * carriers[0], carrier_scale * carriers[1])
    drive_max = max(np.max(np.abs(trace.a_coeffs)), np.max(np.abs(trace.b_coeffs)))
    if min(scaled) < RWA_MIN_SEPARATION * drive_max:
        raise SeparationTooSmall(
            f"scaled carriers {min(scaled):.3g} rad/us below "
            f"{RWA_MIN_SEPARATION:.0f}x drive scale {drive_max:.3g}"
        )
    wave = synth_pulses(trace)
    spline = trace.coeff_spline()
    t_hi = trace.times[-1]
    if psi0 is None:
        psi0 = np.array([0.5, -0.5j, 0.5, -0.5j])

    omega_spline = CubicSplinePair(trace.times, wave.omega1, wave.omega2)

    def rhs_pair(t: float, y: np.ndarray) -> np.ndarray:
        c = spline(min(max(t, 0.0), t_hi))
        h_rwa = assemble_hsa(c[:4], c[4:])
        amp1 = 2.0 * np.hypot(c[1] + c[5], c[2] + c[6])
        amp2 = 2.0 * np.hypot(c[1] - c[5], c[2] - c[6])
        phi1 = _phase(np.array(c[2] + c[6]), np.array(c[1] + c[5]))
        phi2 = _phase(np.array(c[2] - c[6]), np.array(c[1] - c[5]))
        ph1, ph2 = omega_spline.phase(t, carrier_scale)
        cr1 = 0.5 * amp1 * (
            np.cos(2.0 * ph1 + phi1) * SIGMA_X + np.sin(2.0 * ph1 + phi1) * SIGMA_Y
        )
        cr2 = 0.5 * amp2 * (
            np.cos(2.0 * ph2 + phi2) * SIGMA_X + np.sin(2.0 * ph2 + phi2) * SIGMA_Y
        )
        h_full = h_rwa + np.kron(cr1, PROJ_N1) + np.kron(cr2, PROJ_N0)
        out = np.empty_like(y)
        out[:4] = -1j * (h_rwa @ y[:4])
        out[4:] = -1j * (h_full @ y[4:])
        return out

    y0 = np.concatenate([psi0, psi0]).astype(complex)
    sol = integrate_ode(rhs_pair, y0, (0.0, t_hi), cfg, t_eval=trace.times)
    overlap = np.abs(np.einsum("ni,ni->n", np.conj(sol.states[:, :4]), sol.states[:, 4:]))
    norms = np.linalg.norm(sol.states[:, :4], axis=1) * np.linalg.norm(
        sol.states[:, 4:], axis=1
    )
    return float(np.max(1.0 - (overlap / norms) ** 2))


class CubicSplinePair:
    """Carrier phase integrals for the two channels at scaled frequency."""

    def __init__(self, times: np.ndarray, omega1: np.ndarray, omega2: np.ndarray):
        from scipy.interpolate import CubicSpline

        self._s1 = CubicSpline(times, omega1).antiderivative()
        self._s2 = CubicSpline(times, omega2).antiderivative()

    def phase(self, t: float, scale: float) -> tuple[float, float]:
        return scale * float(self._s1(t)), scale * float(self._s2(t))


def export_waveform(
    wave: PulseWaveform,
    path: str | Path,
    fmt: str = "csv",
    constants: NVConstants | None = None,
) -> None:
    """Write the waveform as CSV (row per sample) or JSON (with metadata)."""
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(WAVEFORM_CSV_HEADER)
            for j in range(len(wave.times)):
                writer.writerow(
                    [
                        repr(float(x))
                        for x in (
                            wave.times[j],
                            wave.omega1[j],
                            wave.amp1[j],
                            wave.phi1[j],
                            wave.omega2[j],
                            wave.amp2[j],
                            wave.phi2[j],
                        )
                    ]
                )
    elif fmt == "json":
        meta: dict = {"schema_version": WAVEFORM_SCHEMA_VERSION, "units": "rad/us"}
        if constants is not None:
            meta["constants"] = {
                "D_GHz": constants.D,
                "Q_MHz": constants.Q,
                "A_hf_MHz": constants.A_hf,
                "B_field_G": constants.B_field,
                "omega_e_GHz": constants.omega_e,
                "omega_n_kHz": constants.omega_n,
            }
        payload = {
            "meta": meta,
            "samples": {
                "t_us": wave.times.tolist(),
                "omega1": wave.omega1.tolist(),
                "Omega1": wave.amp1.tolist(),
                "phi1": wave.phi1.tolist(),
                "omega2": wave.omega2.tolist(),
                "Omega2": wave.amp2.tolist(),
                "phi2": wave.phi2.tolist(),
            },
        }
        with open(path, "w") as fh:
            json.dump(payload, fh)
    else:
        raise ValueError(f"unknown waveform format: {fmt!r}")


def import_waveform(path: str | Path) -> PulseWaveform:
    """Read back a JSON waveform written by :func:`export_waveform`."""
    with open(path) as fh:
        payload = json.load(fh)
    s = payload["samples"]
    return PulseWaveform(
        times=np.array(s["t_us"]),
        omega1=np.array(s["omega1"]),
        amp1=np.array(s["Omega1"]),
        phi1=np.array(s["phi1"]),
        omega2=np.array(s["omega2"]),
        amp2=np.array(s["Omega2"]),
        phi2=np.array(s["phi2"]),
    )
