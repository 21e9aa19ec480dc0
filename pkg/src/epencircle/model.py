"""Non-Hermitian two-level model: Hamiltonian, parameter loop, spectrum.

The model is the gain/loss two-level system

    H = [[delta/2 + i*gamma, g], [g, -delta/2 - i*gamma]]

(dimensionless; callers attach the energy scale).  Its eigenvalues are
``+/- sqrt(g^2 + delta^2/4 - gamma^2 + i*delta*gamma)`` and the two
branches coalesce at ``delta = 0``, ``g = +/-1`` for ``gamma = 1``.  The
parameter loop is a circle of radius 0.5 around ``(delta, g) = (0, 1)``.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# |E+ - E-| below this is classified as an exact degeneracy.
EP_DEGENERACY_TOL = 1e-9
# |Im E| below this counts as a real eigenvalue for phase classification.
REAL_SPECTRUM_TOL = 1e-9
# Couplings below this use the decoupled (diagonal) eigenvector branch.
DIAGONAL_COUPLING_TOL = 1e-300

# Loop orientation convention: "clockwise" means theta increasing in time
# (PositiveTheta).  Fixed by requiring the clockwise start-A runs to end on
# the beta branch; the physics claims are invariant under relabeling.
CLOCKWISE_IS_POSITIVE_THETA = True


class Direction(enum.Enum):
    """Sign of d(theta)/dt along the loop."""

    POSITIVE_THETA = 1
    NEGATIVE_THETA = -1

    @property
    def sign(self) -> int:
        return self.value


class PTPhase(enum.Enum):
    PT_SYMMETRIC = "PTSymmetric"
    PT_BROKEN = "PTBroken"
    AT_EP = "AtEP"


@dataclass(frozen=True)
class NHParams:
    """Dimensionless parameters of the two-level Hamiltonian."""

    delta: float
    g: float
    gamma: float = 1.0

    def __post_init__(self) -> None:
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")


@dataclass(frozen=True)
class PathSpec:
    """Circular parameter loop enclosing the degeneracy at (0, 1).

    ``theta0 = 0`` starts in the real-spectrum phase (start point A, at
    ``g = 1.5``); ``theta0 = pi`` starts in the broken phase (start point
    B, at ``g = 0.5``).  ``kappa`` converts the dimensionless Hamiltonian
    to rad/us; the default corresponds to 1 MHz linear frequency.
    """

    theta0: float = 0.0
    direction: Direction = Direction.POSITIVE_THETA
    period_T: float = 15.0
    radius: float = 0.5
    center_g: float = 1.0
    kappa: float = 2.0 * np.pi
    gamma: float = 1.0

    def __post_init__(self) -> None:
        if self.period_T <= 0:
            raise ValueError("period_T must be positive")
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    def theta(self, t: float | np.ndarray) -> float | np.ndarray:
        return self.direction.sign * 2.0 * np.pi * np.asarray(t) / self.period_T


@dataclass(frozen=True)
class EigenSystem:
    """Labeled spectrum at one parameter point.

    The alpha branch is the one with the larger imaginary eigenvalue part
    (the gain-dominant mode); real-spectrum ties are broken by the larger
    real part.
    """

    e_alpha: complex
    e_beta: complex
    v_alpha: np.ndarray
    v_beta: np.ndarray
    phase: PTPhase
    degenerate: bool


def hamiltonian(params: NHParams) -> np.ndarray:
    """Dimensionless two-level Hamiltonian (traceless by construction)."""
    a = params.delta / 2.0 + 1j * params.gamma
    return np.array([[a, params.g], [params.g, -a]])


def path_point(path: PathSpec, t: float) -> NHParams:
    """Loop parameters at time ``t`` (microseconds)."""
    phi = path.theta(t) + path.theta0
    return NHParams(
        delta=path.radius * float(np.sin(phi)),
        g=path.center_g + path.radius * float(np.cos(phi)),
        gamma=path.gamma,
    )


def eigenvalue_plus(delta, g, gamma=1.0):
    """Principal branch of the closed-form eigenvalue (the other is its negative)."""
    return np.sqrt(
        np.asarray(g, dtype=complex) ** 2
        + np.asarray(delta, dtype=complex) ** 2 / 4.0
        - gamma**2
        + 1j * np.asarray(delta) * gamma
    )


def eigensystem(params: NHParams) -> EigenSystem:
    """Closed-form labeled eigensystem at one parameter point."""
    e = complex(eigenvalue_plus(params.delta, params.g, params.gamma))
    a = params.delta / 2.0 + 1j * params.gamma

    if abs(2.0 * e) < EP_DEGENERACY_TOL:
        vec = _eigvec(params, e, a)
        return EigenSystem(e, -e, vec, vec, PTPhase.AT_EP, True)

    candidates = [e, -e]
    if abs(candidates[0].imag - candidates[1].imag) < REAL_SPECTRUM_TOL:
        alpha_val = max(candidates, key=lambda z: z.real)
    else:
        alpha_val = max(candidates, key=lambda z: z.imag)
    beta_val = -alpha_val

    if abs(alpha_val.imag) < REAL_SPECTRUM_TOL and abs(beta_val.imag) < REAL_SPECTRUM_TOL:
        phase = PTPhase.PT_SYMMETRIC
    else:
        phase = PTPhase.PT_BROKEN
    return EigenSystem(
        alpha_val,
        beta_val,
        _eigvec(params, alpha_val, a),
        _eigvec(params, beta_val, a),
        phase,
        False,
    )


def _eigvec(params: NHParams, e: complex, a: complex) -> np.ndarray:
    if abs(params.g) < DIAGONAL_COUPLING_TOL:
        # Decoupled levels: eigenvectors are the basis states.
        return np.array([1.0, 0.0], dtype=complex) if abs(e - a) < abs(e + a) else np.array(
            [0.0, 1.0], dtype=complex
        )
    cand1 = np.array([params.g, e - a])
    cand2 = np.array([e + a, params.g])
    vec = cand1 if np.linalg.norm(cand1) >= np.linalg.norm(cand2) else cand2
    return vec / np.linalg.norm(vec)


def riemann_sample(
    delta_range: tuple[float, float],
    g_range: tuple[float, float],
    n_delta: int,
    n_g: int,
    gamma: float = 1.0,
) -> np.ndarray:
    """Raw Riemann-sheet data on a rectangular grid.

    Returns a ``(n_delta * n_g, 6)`` float array with columns
    ``delta, g, Re E+, Im E+, Re E-, Im E-`` using the principal square
    root for branch assignment (no continuity stitching).
    """
    if n_delta < 1 or n_g < 1:
        raise ValueError("grid dimensions must be positive")
    deltas = np.linspace(*delta_range, n_delta) if n_delta > 1 else np.array([delta_range[0]])
    gs = np.linspace(*g_range, n_g) if n_g > 1 else np.array([g_range[0]])
    dd, gg = np.meshgrid(deltas, gs, indexing="ij")
    e = eigenvalue_plus(dd, gg, gamma)
    out = np.column_stack(
        [
            dd.ravel(),
            gg.ravel(),
            e.real.ravel(),
            e.imag.ravel(),
            (-e).real.ravel(),
            (-e).imag.ravel(),
        ]
    )
    return out


RIEMANN_CSV_HEADER = ["delta", "g", "reEplus", "imEplus", "reEminus", "imEminus"]


def write_riemann_csv(rows: np.ndarray, path: str | Path) -> None:
    """Write :func:`riemann_sample` output with the standard header."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RIEMANN_CSV_HEADER)
        for row in rows:
            writer.writerow([repr(float(x)) for x in row])
