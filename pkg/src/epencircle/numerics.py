"""Small dense complex-matrix kernels and adaptive ODE integration.

Everything here operates on plain ``numpy`` arrays (2x2 or 4x4 complex
matrices, flat complex state vectors).  Matrix routines accept stacked
inputs with shape ``(..., d, d)`` so per-sample trajectory work can be
vectorized.  All tolerances are module-level named constants.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

# Hermiticity acceptance threshold, relative to the largest entry.
HERM_REL_TOL = 1e-10
# Discriminant magnitude below which a 2x2 eigenproblem is treated as defective.
DEGENERACY_TOL = 1e-12
# Eigenvalues in [-PSD_CLAMP_TOL, 0] are clamped to zero by psd_sqrt.
PSD_CLAMP_TOL = 1e-10
# Below -PSD_ERROR_TOL the input is rejected as not positive semidefinite.
PSD_ERROR_TOL = 1e-8
# Minimum eigenvalue of eta accepted by the Sylvester solver.
ETA_MIN_EIG = 1e-6
# |det| threshold for 2x2 inversion, relative to the squared Frobenius norm.
DET_REL_TOL = 1e-14
# Step size underflow threshold as a fraction of the integration span.
MIN_STEP_FRACTION = 1e-15

SIGMA_0 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
PAULI = np.stack([SIGMA_0, SIGMA_X, SIGMA_Y, SIGMA_Z])


class NumericsError(Exception):
    """Base class for numerical kernel failures."""


class NonHermitianInput(NumericsError):
    """A Hermitian-only routine received a non-Hermitian matrix."""


class NotPSD(NumericsError):
    """Matrix square root requested for an indefinite matrix."""


class SingularEta(NumericsError):
    """Sylvester solve with a (near-)singular eta."""


class SingularMatrix(NumericsError):
    """2x2 inversion of a numerically singular matrix."""


class StepSizeUnderflow(NumericsError):
    """The adaptive integrator required steps below the underflow floor."""


@dataclass(frozen=True)
class IntegratorConfig:
    """Settings for the embedded Runge-Kutta integrator.

    ``max_step_fraction`` is relative to the total span so configs stay
    meaningful across loop durations.  ``samples`` is the default dense
    output resolution used by trajectory builders.
    """

    rtol: float = 1e-10
    atol: float = 1e-12
    max_step_fraction: float = 1e-3
    samples: int = 3001

    def __post_init__(self) -> None:
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("tolerances must be positive")
        if not 0 < self.max_step_fraction <= 1:
            raise ValueError("max_step_fraction must lie in (0, 1]")
        if self.samples < 2:
            raise ValueError("samples must be at least 2")


def herm_defect(m: np.ndarray) -> float:
    """Largest deviation from Hermiticity, relative to the largest entry."""
    scale = np.max(np.abs(m))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(m - np.conj(np.swapaxes(m, -1, -2)))) / scale)


def require_hermitian(m: np.ndarray, tol: float = HERM_REL_TOL) -> None:
    defect = herm_defect(m)
    if defect > tol:
        raise NonHermitianInput(f"Hermiticity defect {defect:.3e} exceeds {tol:.1e}")


def herm_eig(m: np.ndarray, tol: float = HERM_REL_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix (ascending eigenvalues).

    Returns ``(w, V)`` with orthonormal eigenvector columns.  Accepts
    stacked input.  Raises :class:`NonHermitianInput` when the Hermiticity
    check fails.
    """
    require_hermitian(m, tol)
    w, v = np.linalg.eigh(0.5 * (m + np.conj(np.swapaxes(m, -1, -2))))
    return w, v


def psd_sqrt(m: np.ndarray, tol: float = HERM_REL_TOL) -> np.ndarray:
    """Principal square root of a Hermitian PSD matrix.

    Eigenvalues in ``[-PSD_CLAMP_TOL, 0]`` are clamped to zero; anything
    below ``-PSD_ERROR_TOL`` raises :class:`NotPSD`.
    """
    w, v = herm_eig(m, tol)
    if np.min(w) < -PSD_ERROR_TOL:
        raise NotPSD(f"minimum eigenvalue {np.min(w):.3e} below -{PSD_ERROR_TOL:.1e}")
    w = np.clip(w, 0.0, None)
    root = (v * np.sqrt(w)[..., None, :]) @ np.conj(np.swapaxes(v, -1, -2))
    return 0.5 * (root + np.conj(np.swapaxes(root, -1, -2)))


def sylvester_solve(
    eta: np.ndarray, rhs: np.ndarray, eps_eta: float = ETA_MIN_EIG
) -> np.ndarray:
    """Solve ``eta X + X eta = rhs`` for Hermitian ``X``.

    ``eta`` must be strictly positive definite.  Solved in eta's eigenbasis
    where the equation is elementwise: ``X_ij = rhs_ij / (l_i + l_j)``.
    """
    w, v = herm_eig(eta)
    if np.min(w) < eps_eta:
        raise SingularEta(f"minimum eigenvalue {np.min(w):.3e} below {eps_eta:.1e}")
    vh = np.conj(np.swapaxes(v, -1, -2))
    rhs_tilde = vh @ rhs @ v
    denom = w[..., :, None] + w[..., None, :]
    x = v @ (rhs_tilde / denom) @ vh
    return 0.5 * (x + np.conj(np.swapaxes(x, -1, -2)))


def inv2(m: np.ndarray) -> np.ndarray:
    """Inverse of a 2x2 complex matrix via the adjugate formula."""
    a, b = m[..., 0, 0], m[..., 0, 1]
    c, d = m[..., 1, 0], m[..., 1, 1]
    det = a * d - b * c
    fro2 = np.sum(np.abs(m) ** 2, axis=(-1, -2))
    if np.any(np.abs(det) < DET_REL_TOL * np.maximum(fro2, 1e-300)):
        raise SingularMatrix("determinant below singularity threshold")
    out = np.empty_like(m)
    out[..., 0, 0] = d
    out[..., 0, 1] = -b
    out[..., 1, 0] = -c
    out[..., 1, 1] = a
    return out / det[..., None, None]


@dataclass(frozen=True)
class Eig2:
    """Eigenpairs of a general 2x2 matrix.

    ``vectors[:, k]`` is the unit eigenvector for ``values[k]``.  At a
    defective point both columns hold the single coalesced eigenvector and
    ``degenerate`` is set.
    """

    values: np.ndarray
    vectors: np.ndarray
    degenerate: bool


def eig_general(m: np.ndarray) -> Eig2:
    """Closed-form eigendecomposition of a general complex 2x2 matrix."""
    a, b = m[0, 0], m[0, 1]
    c, d = m[1, 0], m[1, 1]
    tr = a + d
    det = a * d - b * c
    disc = tr * tr - 4.0 * det
    scale2 = max(1.0, float(np.max(np.abs(m))) ** 2)
    if abs(disc) < DEGENERACY_TOL * scale2:
        lam = tr / 2.0
        vec = _null_vector_2x2(m, lam)
        return Eig2(np.array([lam, lam]), np.stack([vec, vec], axis=1), True)
    sq = np.sqrt(disc)
    lam1 = (tr + sq) / 2.0
    lam2 = (tr - sq) / 2.0
    v1 = _null_vector_2x2(m, lam1)
    v2 = _null_vector_2x2(m, lam2)
    return Eig2(np.array([lam1, lam2]), np.stack([v1, v2], axis=1), False)


def _null_vector_2x2(m: np.ndarray, lam: complex) -> np.ndarray:
    """Unit vector v with (m - lam I) v ~ 0, from the larger adjugate column."""
    a, b = m[0, 0], m[0, 1]
    c, d = m[1, 0], m[1, 1]
    cand1 = np.array([b, lam - a])
    cand2 = np.array([lam - d, c])
    vec = cand1 if np.linalg.norm(cand1) >= np.linalg.norm(cand2) else cand2
    n = np.linalg.norm(vec)
    if n == 0.0:
        # lam I input: any direction is an eigenvector.
        return np.array([1.0 + 0.0j, 0.0j])
    return vec / n


@dataclass(frozen=True)
class ODESolution:
    """Dense trajectory from :func:`integrate_ode`.

    ``states[k]`` is the state at ``times[k]``; ``dense`` evaluates the
    interpolant at arbitrary times inside the span.
    """

    times: np.ndarray
    states: np.ndarray
    dense: Callable[[float], np.ndarray]


def integrate_ode(
    f: Callable[[float, np.ndarray], np.ndarray],
    y0: np.ndarray,
    t_span: tuple[float, float],
    cfg: IntegratorConfig = IntegratorConfig(),
    t_eval: Sequence[float] | None = None,
) -> ODESolution:
    """Adaptive RK45 integration of a flat complex ODE with dense output."""
    t0, t1 = t_span
    span = abs(t1 - t0)
    if span == 0.0:
        times = np.array([t0])
        states = np.array([np.asarray(y0, dtype=complex)])
        return ODESolution(times, states, lambda t: np.asarray(y0, dtype=complex))
    if t_eval is None:
        t_eval = np.linspace(t0, t1, cfg.samples)
    sol = solve_ivp(
        f,
        (t0, t1),
        np.asarray(y0, dtype=complex),
        method="RK45",
        rtol=cfg.rtol,
        atol=cfg.atol,
        max_step=cfg.max_step_fraction * span,
        dense_output=True,
        t_eval=np.asarray(t_eval, dtype=float),
    )
    if not sol.success:
        raise StepSizeUnderflow(f"integration failed: {sol.message}")
    return ODESolution(sol.t, sol.y.T.copy(), lambda t: sol.sol(t))
