"""Hermitian dilation of the non-Hermitian loop dynamics.

The non-unitary two-level evolution is embedded in a unitary four-level
(system x ancilla) evolution ``|Psi> = psi(x)|-> + eta psi(x)|+>`` with
metric ``M = eta^2 + I``.  M obeys ``dM/dt = i kappa (M Hs - Hs^dag M)``
and a real scalar gauge ``b(t)`` rescales it to keep ``M - I`` positive
definite.  The coupling matrices Lambda, Gamma entering

    H_sa = Lambda (x) I + Gamma (x) sigma_z

are differences of exponentially large, nearly equal terms: cond(M) grows
like ``exp(4 kappa gamma t)`` while Lambda and Gamma stay bounded, so all
trace assembly runs in extended precision (gmpy2, ~115 decimal digits by
default) and only the bounded outputs are stored as doubles.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import gmpy2
import numpy as np
from scipy.interpolate import CubicSpline
from scipy.ndimage import gaussian_filter1d, maximum_filter1d

from .model import PathSpec, hamiltonian, path_point
from .numerics import (
    PAULI,
    SIGMA_Z,
    IntegratorConfig,
    integrate_ode,
    psd_sqrt,
    sylvester_solve,
)

# Initial ancilla coupling: M(0) = (eta0^2 + 1) I = 1.5 I.
ANCILLA_ETA0 = float(np.sqrt(0.5))
# Ancilla states in the computational basis; |Psi> = psi(x)|-> + eta psi(x)|+>.
MINUS_KET = np.array([1.0, -1.0j]) / np.sqrt(2.0)
PLUS_KET = np.array([-1.0j, 1.0]) / np.sqrt(2.0)
# ~115 decimal digits; covers cond(M) up to ~1e80 with headroom.
DEFAULT_PRECISION_BITS = 384
# Off-diagonal magnitude below which a 2x2 Hermitian matrix is treated as diagonal.
DIAG_SPLIT_TOL_BITS = 8

DILATION_CSV_HEADER = [
    "t", "b", "A0", "A1", "A2", "A3", "B0", "B1", "B2", "B3", "lmin_M_minus_I",
]


class InfeasibleGauge(Exception):
    """No gauge can restore the metric floor at t = 0."""


@dataclass(frozen=True)
class GaugeSchedule:
    """Policy for the scalar gauge factor G(t) = exp(-2 int b).

    ``G`` is the smallest factor keeping ``lmin(G M - I) >= eps_floor``,
    raised by ``eps_headroom`` and smoothed over ``smooth_width``
    (microseconds) with a local max followed by a moving average; the
    floor is re-imposed after smoothing so it holds at every sample.
    """

    eps_floor: float = 1e-3
    eps_headroom: float = 0.05
    smooth_width: float = 0.1

    def __post_init__(self) -> None:
        if self.eps_floor <= 0:
            raise ValueError("eps_floor must be positive")
        if self.eps_headroom < 0:
            raise ValueError("eps_headroom must be nonnegative")
        if self.smooth_width < 0:
            raise ValueError("smooth_width must be nonnegative")


@dataclass(frozen=True)
class DilationConfig:
    """Fixed-step extended-precision settings for trace construction."""

    n_steps: int = 24000
    store_every: int = 1
    precision_bits: int = DEFAULT_PRECISION_BITS
    gauge: GaugeSchedule = GaugeSchedule()

    def __post_init__(self) -> None:
        if self.n_steps < 100:
            raise ValueError("n_steps must be at least 100")
        if self.store_every < 1 or self.n_steps % self.store_every:
            raise ValueError("store_every must divide n_steps")
        if self.precision_bits < 64:
            raise ValueError("precision_bits must be at least 64")


# ---------------------------------------------------------------------------
# Extended-precision 2x2 kernels on (a, b, c, d) row-major tuples of mpc.


def _xp(m: np.ndarray):
    return tuple(gmpy2.mpc(complex(x)) for x in np.asarray(m).ravel())


def _np(m) -> np.ndarray:
    return np.array([complex(x) for x in m]).reshape(2, 2)


def _mmul(x, y):
    return (
        x[0] * y[0] + x[1] * y[2],
        x[0] * y[1] + x[1] * y[3],
        x[2] * y[0] + x[3] * y[2],
        x[2] * y[1] + x[3] * y[3],
    )


def _madd(x, y):
    return (x[0] + y[0], x[1] + y[1], x[2] + y[2], x[3] + y[3])


def _msub(x, y):
    return (x[0] - y[0], x[1] - y[1], x[2] - y[2], x[3] - y[3])


def _mscale(s, x):
    return (s * x[0], s * x[1], s * x[2], s * x[3])


def _dag(x):
    c = gmpy2.mpc
    return (
        c(x[0].real, -x[0].imag),
        c(x[2].real, -x[2].imag),
        c(x[1].real, -x[1].imag),
        c(x[3].real, -x[3].imag),
    )


def _ident():
    one = gmpy2.mpc(1)
    zero = gmpy2.mpc(0)
    return (one, zero, zero, one)


def _inv_xp(m):
    det = m[0] * m[3] - m[1] * m[2]
    return (m[3] / det, -m[1] / det, -m[2] / det, m[0] / det)


def _herm_eigvals_xp(m):
    """(lmax, lmin) of a Hermitian PD 2x2, smaller root via the stable form."""
    tr = m[0].real + m[3].real
    det = (m[0] * m[3] - m[1] * m[2]).real
    disc = tr * tr - 4 * det
    sq = gmpy2.sqrt(disc) if disc > 0 else gmpy2.mpfr(0)
    lmax = (tr + sq) / 2
    lmin = 2 * det / (tr + sq)
    return lmax, lmin


def _sqrt_psd_xp(p):
    """Principal square root of a Hermitian PD 2x2 (closed form)."""
    det = (p[0] * p[3] - p[1] * p[2]).real
    s = gmpy2.sqrt(det)
    denom = gmpy2.sqrt(p[0].real + p[3].real + 2 * s)
    return (
        (p[0] + s) / denom,
        p[1] / denom,
        p[2] / denom,
        (p[3] + s) / denom,
    )


def _sylvester_xp(eta, rhs):
    """Solve eta X + X eta = rhs for Hermitian X, eta Hermitian PD."""
    lmax, lmin = _herm_eigvals_xp(eta)
    offd = abs(eta[1])
    scale = max(abs(eta[0].real), abs(eta[3].real))
    if offd == 0 or offd < scale * gmpy2.mpfr(2) ** (
        -gmpy2.get_context().precision + DIAG_SPLIT_TOL_BITS
    ):
        l1, l2 = eta[0].real, eta[3].real
        return (
            rhs[0] / (2 * l1),
            rhs[1] / (l1 + l2),
            rhs[2] / (l1 + l2),
            rhs[3] / (2 * l2),
        )
    v1 = (eta[1], lmax - eta[0])
    v2 = (eta[1], lmin - eta[0])
    n1 = gmpy2.sqrt(abs(v1[0]) ** 2 + abs(v1[1]) ** 2)
    n2 = gmpy2.sqrt(abs(v2[0]) ** 2 + abs(v2[1]) ** 2)
    u = (v1[0] / n1, v2[0] / n2, v1[1] / n1, v2[1] / n2)
    rt = _mmul(_mmul(_dag(u), rhs), u)
    x = (
        rt[0] / (2 * lmax),
        rt[1] / (lmax + lmin),
        rt[2] / (lmax + lmin),
        rt[3] / (2 * lmin),
    )
    return _mmul(_mmul(u, x), _dag(u))


def _herm_defect_xp(m) -> float:
    d = _msub(m, _dag(m))
    num = max(abs(z) for z in d)
    den = max(abs(z) for z in m)
    if den == 0:
        return 0.0
    return float(num / den)


# ---------------------------------------------------------------------------
# Gauge-free metric evolution.


@dataclass(frozen=True)
class MnhTrajectory:
    """Inverse-propagator samples defining M_nh = 1.5 Vi^dag Vi.

    ``vi`` holds extended-precision 2x2 tuples; ``ln_lmin`` is the log of
    the smallest metric eigenvalue per sample (a plain float: the log is
    always of modest size even when the eigenvalue underflows doubles).
    """

    path: PathSpec
    times: np.ndarray
    vi: tuple
    hs: tuple  # dimensionless system Hamiltonian, XP, per sample
    ln_lmin: np.ndarray


def evolve_M_gauge_free(
    path: PathSpec, cfg: DilationConfig = DilationConfig()
) -> MnhTrajectory:
    """Integrate the metric ODE dM/dt = i kappa (M Hs - Hs^dag M).

    Implemented through the inverse propagator Vi (dVi/dt = i kappa Vi Hs,
    Vi(0) = I) so that ``M = 1.5 Vi^dag Vi`` is exactly Hermitian PD with
    det M = 2.25 at every step.  Fixed-step RK4 in extended precision.
    """
    ctx = gmpy2.get_context()
    saved = ctx.precision
    ctx.precision = cfg.precision_bits
    try:
        n = cfg.n_steps
        h = path.period_T / n
        half_times = np.arange(2 * n + 1) * (h / 2.0)
        hs_half = [_xp(hamiltonian(path_point(path, t))) for t in half_times]
        ik = gmpy2.mpc(0, path.kappa)

        def deriv(vi, hmat):
            p = _mmul(vi, hmat)
            return tuple(ik * z for z in p)

        vi = _ident()
        stored = [vi]
        h6 = gmpy2.mpfr(h) / 6
        h2 = gmpy2.mpfr(h) / 2
        hh = gmpy2.mpfr(h)
        for k in range(n):
            h0, hm, h1 = hs_half[2 * k], hs_half[2 * k + 1], hs_half[2 * k + 2]
            k1 = deriv(vi, h0)
            k2 = deriv(_madd(vi, _mscale(h2, k1)), hm)
            k3 = deriv(_madd(vi, _mscale(h2, k2)), hm)
            k4 = deriv(_madd(vi, _mscale(hh, k3)), h1)
            vi = tuple(
                vi[j] + h6 * (k1[j] + 2 * k2[j] + 2 * k3[j] + k4[j])
                for j in range(4)
            )
            if (k + 1) % cfg.store_every == 0:
                stored.append(vi)

        times = np.arange(len(stored)) * (h * cfg.store_every)
        hs_samples = tuple(hs_half[2 * cfg.store_every * j] for j in range(len(stored)))
        ln_lmin = np.empty(len(stored))
        scale = gmpy2.mpfr(1.5)
        for j, v in enumerate(stored):
            m = _mscale(scale, _mmul(_dag(v), v))
            _, lmin = _herm_eigvals_xp(m)
            ln_lmin[j] = float(gmpy2.log(lmin))
        return MnhTrajectory(path, times, tuple(stored), hs_samples, ln_lmin)
    finally:
        ctx.precision = saved


@dataclass(frozen=True)
class GaugeResult:
    """Sampled gauge schedule with its defining spline.

    ``ln_G`` is the log gauge factor; ``b = -1/2 d(ln G)/dt`` is taken
    from the spline derivative so that ``exp(-2 int b) = G`` holds to
    roundoff by construction.
    """

    times: np.ndarray
    b: np.ndarray
    ln_G: np.ndarray
    spline: CubicSpline


def schedule_b(traj: MnhTrajectory, gauge: GaugeSchedule = GaugeSchedule()) -> GaugeResult:
    """Build the scalar gauge keeping lmin(G M_nh - I) >= eps_floor.

    The requirement curve is raised by the headroom, lifted by a local max
    filter, capped by a causal ramp so G(0) = 1 exactly, then convolved
    with a Gaussian whose support fits inside the max window (the result
    therefore never drops below the requirement).  ``ln G`` and ``b`` are
    the order-0 and order-1 outputs of the same convolution, so b is
    smooth and ``exp(-2 int b) = G`` to quadrature accuracy.
    """
    times = traj.times
    ln_req = np.log1p(gauge.eps_floor) - traj.ln_lmin
    if ln_req[0] > 0:
        raise InfeasibleGauge(
            f"metric floor unreachable at t=0 (ln requirement {ln_req[0]:.3e})"
        )
    raw = np.maximum(0.0, ln_req + np.log1p(gauge.eps_headroom))
    dt = times[1] - times[0]
    win = max(1, 2 * int(round(gauge.smooth_width / (2.0 * dt))) + 1)
    lifted = maximum_filter1d(raw, size=win, mode="nearest")
    # G(0) = 1 is mandatory (M(0) = 1.5 I, no accumulated gauge yet).  The
    # causal ramp is slightly steeper than the requirement ever climbs, so
    # it never cuts below the floor (ln_req(0) <= 0) while removing the
    # start-up jump the smoothing would otherwise leave at t = 0.
    ramp_slope = 1.2 * max(float(np.max(np.diff(ln_req))) / dt, 1.0)
    target = np.maximum(np.minimum(lifted, ramp_slope * times), 0.0)
    sigma = max(win / 8.0, 0.5)

    def smoothed(x: np.ndarray, order: int = 0) -> np.ndarray:
        return gaussian_filter1d(x, sigma, order=order, mode="nearest")

    # Smoothing cuts corners and can undercut the requirement; lift the
    # pre-smoothing target at the undercut spots (widened so the Gaussian
    # keeps full height there) and repeat until the curve clears the
    # headroom-raised requirement, so the floor holds with margin and the
    # final safety clamp below never binds (no kinks in the dip region).
    ln_g = smoothed(target)
    ln_g -= ln_g[0]
    for _ in range(60):
        violation = np.maximum(raw - ln_g, 0.0)
        if violation.max() <= 1e-10:
            break
        target = target + maximum_filter1d(violation, size=win, mode="nearest")
        ln_g = smoothed(target)
        ln_g -= ln_g[0]
    else:
        raise InfeasibleGauge(
            "gauge smoothing failed to satisfy the metric floor; "
            "increase eps_headroom or reduce smooth_width"
        )
    ln_g = np.maximum(ln_g, ln_req)
    # ln_g is smooth after the Gaussian pass, so the spline derivative is
    # free of node-scale artifacts and exactly consistent with ln_g.
    spline = CubicSpline(times, ln_g)
    b = -0.5 * spline(times, 1)
    return GaugeResult(times, b, ln_g, spline)


# ---------------------------------------------------------------------------
# Per-sample trace assembly.


@dataclass(frozen=True)
class DilationTrace:
    """Sampled gauge-dressed dilation data for one loop.

    ``a_coeffs``/``b_coeffs`` are the Pauli components of Lambda and Gamma
    (``X = sum_i c_i sigma_i``), so ``H_sa`` is recovered by
    :func:`assemble_hsa`.  ``recovery`` holds ``(I - i eta)^{-1}`` per
    sample (entries bounded by 1 in modulus, safe as doubles even when
    eta itself spans huge scales).  ``herm_defect_max`` and
    ``eta_sq_defect_max`` are worst-case internal consistency residuals
    measured in extended precision before rounding.
    """

    path: PathSpec
    config: DilationConfig
    times: np.ndarray
    b: np.ndarray
    ln_G: np.ndarray
    gauge_spline: CubicSpline
    a_coeffs: np.ndarray  # (n, 4)
    b_coeffs: np.ndarray  # (n, 4)
    eta: np.ndarray  # (n, 2, 2)
    recovery: np.ndarray  # (n, 2, 2)
    lmin_M_minus_I: np.ndarray
    ln_lmin_nh: np.ndarray
    herm_defect_max: float
    eta_sq_defect_max: float

    def coeff_spline(self) -> CubicSpline:
        """Cubic interpolant of the 8 Pauli coefficients (A0..A3, B0..B3)."""
        stacked = np.concatenate([self.a_coeffs, self.b_coeffs], axis=1)
        return CubicSpline(self.times, stacked, axis=0)

    def hsa_coeffs(self, t: float | np.ndarray) -> np.ndarray:
        return self.coeff_spline()(np.clip(t, self.times[0], self.times[-1]))

    def hsa_at(self, t: float) -> np.ndarray:
        return assemble_hsa(*np.split(self.hsa_coeffs(float(t)), 2))

    def gauge_G(self, t: float | np.ndarray) -> np.ndarray:
        return np.exp(self.gauge_spline(t))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(DILATION_CSV_HEADER)
            for j in range(len(self.times)):
                row = [
                    self.times[j],
                    self.b[j],
                    *self.a_coeffs[j],
                    *self.b_coeffs[j],
                    self.lmin_M_minus_I[j],
                ]
                writer.writerow([repr(float(x)) for x in row])


def _trace_from_mnh(
    traj: MnhTrajectory, gauge_result: GaugeResult, cfg: DilationConfig
) -> DilationTrace:
    ctx = gmpy2.get_context()
    saved = ctx.precision
    ctx.precision = cfg.precision_bits
    try:
        n = len(traj.times)
        kappa = traj.path.kappa
        a_coeffs = np.empty((n, 4))
        b_coeffs = np.empty((n, 4))
        eta_out = np.empty((n, 2, 2), dtype=complex)
        recovery = np.empty((n, 2, 2), dtype=complex)
        lmin_out = np.empty(n)
        herm_worst = 0.0
        etasq_worst = 0.0
        ident = _ident()
        scale0 = gmpy2.mpfr(1.5)
        for j in range(n):
            g = gmpy2.exp(gmpy2.mpfr(float(gauge_result.ln_G[j])))
            bj = gmpy2.mpfr(float(gauge_result.b[j]))
            hs = traj.hs[j]
            vi = traj.vi[j]
            mb = _mscale(g * scale0, _mmul(_dag(vi), vi))
            # dMb/dt = -2 b Mb + i kappa (Mb Hs - Hs^dag Mb)
            ik = gmpy2.mpc(0, kappa)
            dmb = _madd(
                _mscale(-2 * bj, mb),
                tuple(
                    ik * z
                    for z in _msub(_mmul(mb, hs), _mmul(_dag(hs), mb))
                ),
            )
            p = _msub(mb, ident)
            eta = _sqrt_psd_xp(p)
            eta_dot = _sylvester_xp(eta, dmb)
            # H' = kappa Hs + i b I; Gamma = [eta_dot + i(H' eta - eta H')] Mb^-1
            hp = _madd(_mscale(gmpy2.mpfr(kappa), hs), _mscale(gmpy2.mpc(0, 1) * bj, ident))
            comm = _msub(_mmul(hp, eta), _mmul(eta, hp))
            minv = _inv_xp(mb)
            gamma = _mmul(
                _madd(eta_dot, tuple(gmpy2.mpc(0, 1) * z for z in comm)), minv
            )
            lam = _madd(hp, tuple(gmpy2.mpc(0, 1) * z for z in _mmul(gamma, eta)))

            herm_worst = max(herm_worst, _herm_defect_xp(lam), _herm_defect_xp(gamma))
            esq = _msub(_mmul(eta, eta), p)
            pmax = max(abs(z) for z in p)
            etasq_worst = max(etasq_worst, float(max(abs(z) for z in esq) / pmax))

            a_coeffs[j] = _pauli_coeffs_xp(lam)
            b_coeffs[j] = _pauli_coeffs_xp(gamma)
            eta_out[j] = _np(eta)
            i_minus_ieta = _msub(ident, tuple(gmpy2.mpc(0, 1) * z for z in eta))
            recovery[j] = _np(_inv_xp(i_minus_ieta))
            _, lmin = _herm_eigvals_xp(p)
            lmin_out[j] = float(lmin)
        return DilationTrace(
            path=traj.path,
            config=cfg,
            times=traj.times,
            b=gauge_result.b,
            ln_G=gauge_result.ln_G,
            gauge_spline=gauge_result.spline,
            a_coeffs=a_coeffs,
            b_coeffs=b_coeffs,
            eta=eta_out,
            recovery=recovery,
            lmin_M_minus_I=lmin_out,
            ln_lmin_nh=traj.ln_lmin,
            herm_defect_max=herm_worst,
            eta_sq_defect_max=etasq_worst,
        )
    finally:
        ctx.precision = saved


def _pauli_coeffs_xp(m) -> np.ndarray:
    """Pauli components of the Hermitian part of an XP 2x2 matrix."""
    a, b_, c, d = m
    return np.array(
        [
            float((a.real + d.real)) / 2.0,
            float((b_.real + c.real)) / 2.0,
            float((c.imag - b_.imag)) / 2.0,
            float((a.real - d.real)) / 2.0,
        ]
    )


_trace_cache: dict[tuple[PathSpec, DilationConfig], DilationTrace] = {}


def dilation_trace(path: PathSpec, cfg: DilationConfig = DilationConfig()) -> DilationTrace:
    """Full dilation trace for one loop: metric, gauge, couplings, recovery.

    Cached on (path, cfg): traces are direction/start dependent but do not
    depend on which eigenstate is being encircled, so the eight standard
    presets share four traces.
    """
    key = (path, cfg)
    if key not in _trace_cache:
        traj = evolve_M_gauge_free(path, cfg)
        gauge_result = schedule_b(traj, cfg.gauge)
        _trace_cache[key] = _trace_from_mnh(traj, gauge_result, cfg)
    return _trace_cache[key]


def trace_cached(path: PathSpec, cfg: DilationConfig = DilationConfig()) -> bool:
    return (path, cfg) in _trace_cache


def store_trace(trace: DilationTrace) -> None:
    """Seed the cache with a trace built elsewhere (e.g. a worker process)."""
    _trace_cache[(trace.path, trace.config)] = trace


# ---------------------------------------------------------------------------
# Double-precision reference implementations (well-conditioned inputs only).


def eta_and_derivative(m: np.ndarray, dm: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """eta = sqrt(M - I) and its derivative from dM/dt (double precision).

    The derivative solves the Sylvester relation ``eta eta_dot + eta_dot
    eta = dM/dt``.  Intended for modest condition numbers; the trace
    builder uses the extended-precision path internally.
    """
    eta = psd_sqrt(m - np.eye(m.shape[-1]))
    eta_dot = sylvester_solve(eta, dm)
    return eta, eta_dot


def lambda_gamma(
    eta: np.ndarray,
    eta_dot: np.ndarray,
    hs: np.ndarray,
    b: float = 0.0,
    kappa: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """System/ancilla coupling matrices from one metric sample (double)."""
    ident = np.eye(2, dtype=complex)
    hp = kappa * hs + 1j * b * ident
    m = eta @ eta + ident
    gamma = (eta_dot + 1j * (hp @ eta - eta @ hp)) @ np.linalg.inv(m)
    lam = hp + 1j * (gamma @ eta)
    return lam, gamma


def pauli_coefficients(m: np.ndarray) -> np.ndarray:
    """Components c_i with m = sum_i c_i sigma_i for Hermitian 2x2 m."""
    return np.real(np.einsum("iab,ba->i", PAULI, m)) / 2.0


def assemble_hsa(a_coeffs: np.ndarray, b_coeffs: np.ndarray) -> np.ndarray:
    """Four-level Hamiltonian Lambda (x) I + Gamma (x) sigma_z (system left)."""
    lam = np.einsum("i,iab->ab", np.asarray(a_coeffs).ravel(), PAULI)
    gamma = np.einsum("i,iab->ab", np.asarray(b_coeffs).ravel(), PAULI)
    return np.kron(lam, np.eye(2)) + np.kron(gamma, SIGMA_Z)


# ---------------------------------------------------------------------------
# Dilated (unitary) evolution and state recovery.


def dilate_initial_state(psi0: np.ndarray, eta0: float = ANCILLA_ETA0) -> np.ndarray:
    """Normalized tensor state psi(x)|-> + eta0 psi(x)|+> (flat index 2s+a)."""
    psi0 = np.asarray(psi0, dtype=complex)
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-9:
        raise ValueError("psi0 must be normalized")
    full = np.kron(psi0, MINUS_KET) + eta0 * np.kron(psi0, PLUS_KET)
    return full / np.linalg.norm(full)


@dataclass(frozen=True)
class DilatedTrajectory:
    """Unitary four-level trajectory with ancilla projection probability."""

    times: np.ndarray
    states: np.ndarray  # (n, 4)
    p_minus: np.ndarray
    trace: DilationTrace

    def norm_drift(self) -> float:
        return float(np.max(np.abs(np.linalg.norm(self.states, axis=1) - 1.0)))


def minus_projection(psi4: np.ndarray) -> np.ndarray:
    """System amplitudes of the ancilla-|-> component (unnormalized)."""
    psi4 = np.asarray(psi4)
    return (psi4[..., 0::2] + 1j * psi4[..., 1::2]) / np.sqrt(2.0)


def evolve_dilated(
    trace: DilationTrace,
    psi_full0: np.ndarray,
    cfg: IntegratorConfig = IntegratorConfig(rtol=1e-12, atol=1e-14),
) -> DilatedTrajectory:
    """Integrate i dPsi/dt = H_sa(t) Psi over the sampled trace."""
    times = trace.times
    spline = trace.coeff_spline()
    t_lo, t_hi = times[0], times[-1]

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        c = spline(min(max(t, t_lo), t_hi))
        h = assemble_hsa(c[:4], c[4:])
        return -1j * (h @ y)

    sol = integrate_ode(rhs, np.asarray(psi_full0, dtype=complex), (times[0], times[-1]), cfg, t_eval=times)
    proj = minus_projection(sol.states)
    p_minus = np.sum(np.abs(proj) ** 2, axis=1)
    return DilatedTrajectory(sol.times, sol.states, p_minus, trace)


def recover_psi(
    psi4: np.ndarray, recovery_op: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Two routes back to the encircling state, both normalized.

    ``psi_from_chi`` applies ``(I - i eta)^{-1}`` to the ancilla-|0>
    projection (well conditioned even when the |-> weight is tiny);
    ``psi_from_minus`` normalizes the direct ancilla-|-> projection.
    """
    psi4 = np.asarray(psi4, dtype=complex)
    chi = psi4[0::2]
    psi_chi = recovery_op @ chi
    n_chi = np.linalg.norm(psi_chi)
    minus = minus_projection(psi4)
    n_minus = np.linalg.norm(minus)
    if n_chi == 0.0 or n_minus == 0.0:
        raise ValueError("dilated state has no overlap with the recovery subspace")
    return psi_chi / n_chi, minus / n_minus
