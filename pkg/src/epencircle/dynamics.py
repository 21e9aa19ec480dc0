"""Direct integration of the non-Hermitian dynamics along the loop.

The state is propagated in norm-split form: a unit-norm direction ``phi``
plus a real log-norm accumulator, so that ``exp(log_norm) * phi`` solves
``i d/dt psi = kappa * H(t) psi`` even when the raw norm covers many
orders of magnitude.
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import (
    CLOCKWISE_IS_POSITIVE_THETA,
    Direction,
    EigenSystem,
    NHParams,
    PathSpec,
    eigensystem,
    hamiltonian,
    path_point,
)
from .numerics import IntegratorConfig, integrate_ode

# Smallest winning overlap that still counts as a definite branch label.
LABEL_DECISION_THRESHOLD = 0.9
# Branch continuation fails if both candidate overlaps drop below this.
BRANCH_MATCH_FLOOR = 0.5
# Eigenvalue distance and eigenvector overlap defining a closed-loop branch match.
SWAP_EIGVAL_TOL = 1e-6
SWAP_OVERLAP_MIN = 0.99
# Measurement angles mirrored from the tomography table rows.
TABLE_THETAS = tuple(np.pi / 3.0 * k for k in range(7))


class StartPoint(enum.Enum):
    A = "A"
    B = "B"

    @property
    def theta0(self) -> float:
        return 0.0 if self is StartPoint.A else np.pi


class BranchLabel(enum.Enum):
    ALPHA = "alpha"
    BETA = "beta"
    INDETERMINATE = "indeterminate"


class BranchAmbiguity(Exception):
    """Quasistatic branch continuation lost track of both branches."""


def direction_for(clockwise: bool) -> Direction:
    """Map clockwise/counterclockwise loop naming onto theta signs."""
    if clockwise == CLOCKWISE_IS_POSITIVE_THETA:
        return Direction.POSITIVE_THETA
    return Direction.NEGATIVE_THETA


@dataclass(frozen=True)
class NHTrajectory:
    """Norm-split trajectory of the encircling state."""

    times: np.ndarray
    states: np.ndarray  # (n, 2), unit norm per sample
    log_norm: np.ndarray  # ln ||psi||, log_norm[0] = 0
    path: PathSpec

    def state_at(self, index: int) -> np.ndarray:
        return self.states[index]


@dataclass(frozen=True)
class ModeSwitchReport:
    """Overlap history and final branch classification for one run."""

    start_point: StartPoint
    clockwise: bool
    init_label: BranchLabel
    thetas: np.ndarray
    overlap_alpha: np.ndarray
    overlap_beta: np.ndarray
    log_norm: np.ndarray
    final_label: BranchLabel
    final_overlap: float
    table_thetas: np.ndarray = field(default_factory=lambda: np.array(TABLE_THETAS))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["theta", "overlap_alpha", "overlap_beta", "log_norm"])
            for th, oa, ob, ln in zip(
                self.thetas, self.overlap_alpha, self.overlap_beta, self.log_norm
            ):
                writer.writerow([repr(float(th)), repr(float(oa)), repr(float(ob)), repr(float(ln))])

    def summary(self) -> dict:
        return {
            "start_point": self.start_point.value,
            "direction": "clockwise" if self.clockwise else "counterclockwise",
            "init_label": self.init_label.value,
            "final_label": self.final_label.value,
            "final_overlap": float(self.final_overlap),
            "final_log_norm": float(self.log_norm[-1]),
        }

    def to_json(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)


def integrate_nh(
    path: PathSpec,
    psi0: np.ndarray,
    cfg: IntegratorConfig = IntegratorConfig(),
    t_eval: np.ndarray | None = None,
) -> NHTrajectory:
    """Integrate ``i d/dt psi = kappa H(t) psi`` in norm-split form."""
    psi0 = np.asarray(psi0, dtype=complex)
    norm0 = np.linalg.norm(psi0)
    if abs(norm0 - 1.0) > 1e-9:
        raise ValueError("psi0 must be normalized")

    kappa = path.kappa

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        phi = y[:2]
        h = kappa * hamiltonian(path_point(path, t))
        z = -1j * (h @ phi)
        nrm2 = float(np.real(np.vdot(phi, phi)))
        r = float(np.real(np.vdot(phi, z))) / nrm2
        return np.concatenate([z - r * phi, [r]])

    y0 = np.concatenate([psi0 / norm0, [0.0j]])
    sol = integrate_ode(rhs, y0, (0.0, path.period_T), cfg, t_eval=t_eval)
    states = sol.states[:, :2]
    states = states / np.linalg.norm(states, axis=1)[:, None]
    return NHTrajectory(sol.times, states, sol.states[:, 2].real, path)


def overlaps(state: np.ndarray, eigsys: EigenSystem) -> tuple[float, float]:
    """Magnitude overlaps of a unit state with the two labeled eigenvectors."""
    return (
        float(abs(np.vdot(eigsys.v_alpha, state))),
        float(abs(np.vdot(eigsys.v_beta, state))),
    )


def encircle_case(
    start: StartPoint,
    clockwise: bool,
    init_label: BranchLabel,
    cfg: IntegratorConfig = IntegratorConfig(),
    path: PathSpec | None = None,
) -> ModeSwitchReport:
    """Run one encircling preset and classify the final state.

    Overlaps are taken against the eigensystem of the *initial* Hamiltonian
    throughout, matching how the mode switch is characterized.
    """
    if path is None:
        path = PathSpec(theta0=start.theta0, direction=direction_for(clockwise))
    ref = eigensystem(path_point(path, 0.0))
    psi0 = ref.v_alpha if init_label is BranchLabel.ALPHA else ref.v_beta

    traj = integrate_nh(path, psi0, cfg)
    oa = np.abs(traj.states @ np.conj(ref.v_alpha))
    ob = np.abs(traj.states @ np.conj(ref.v_beta))
    thetas = 2.0 * np.pi * traj.times / path.period_T

    final_oa, final_ob = float(oa[-1]), float(ob[-1])
    if max(final_oa, final_ob) < LABEL_DECISION_THRESHOLD:
        final_label = BranchLabel.INDETERMINATE
    elif final_oa >= final_ob:
        final_label = BranchLabel.ALPHA
    else:
        final_label = BranchLabel.BETA
    return ModeSwitchReport(
        start_point=start,
        clockwise=clockwise,
        init_label=init_label,
        thetas=thetas,
        overlap_alpha=oa,
        overlap_beta=ob,
        log_norm=traj.log_norm,
        final_label=final_label,
        final_overlap=max(final_oa, final_ob),
    )


@dataclass(frozen=True)
class BranchCurves:
    """Continuously tracked eigenvalue/eigenvector branches over one loop."""

    thetas: np.ndarray
    values: np.ndarray  # (2, n) complex eigenvalues
    vectors: np.ndarray  # (2, n, 2) unit eigenvectors
    swapped: bool


def quasistatic_track(path: PathSpec, n_steps: int = 720, loops: int = 1) -> BranchCurves:
    """Track the two spectral branches by maximal-overlap continuation."""
    if n_steps < 360:
        raise ValueError("n_steps must be at least 360")
    thetas = np.linspace(0.0, loops * 2.0 * np.pi, loops * n_steps + 1)
    sign = path.direction.sign
    values = np.empty((2, thetas.size), dtype=complex)
    vectors = np.empty((2, thetas.size, 2), dtype=complex)

    def params_at(theta: float):
        phi = path.theta0 + sign * theta
        return NHParams(
            delta=path.radius * float(np.sin(phi)),
            g=path.center_g + path.radius * float(np.cos(phi)),
            gamma=path.gamma,
        )

    es = eigensystem(params_at(0.0))
    values[:, 0] = [es.e_alpha, es.e_beta]
    vectors[0, 0] = es.v_alpha
    vectors[1, 0] = es.v_beta
    for k in range(1, thetas.size):
        es = eigensystem(params_at(thetas[k]))
        cand_vals = (es.e_alpha, es.e_beta)
        cand_vecs = (es.v_alpha, es.v_beta)
        o_direct = abs(np.vdot(cand_vecs[0], vectors[0, k - 1]))
        o_cross = abs(np.vdot(cand_vecs[1], vectors[0, k - 1]))
        if max(o_direct, o_cross) < BRANCH_MATCH_FLOOR and (
            max(
                abs(np.vdot(cand_vecs[1], vectors[1, k - 1])),
                abs(np.vdot(cand_vecs[0], vectors[1, k - 1])),
            )
            < BRANCH_MATCH_FLOOR
        ):
            raise BranchAmbiguity(f"step too coarse near theta={thetas[k]:.4f}")
        first, second = (0, 1) if o_direct >= o_cross else (1, 0)
        values[0, k] = cand_vals[first]
        values[1, k] = cand_vals[second]
        vectors[0, k] = cand_vecs[first]
        vectors[1, k] = cand_vecs[second]

    swapped = bool(
        abs(values[0, -1] - values[1, 0]) < SWAP_EIGVAL_TOL
        and abs(np.vdot(vectors[0, -1], vectors[1, 0])) > SWAP_OVERLAP_MIN
        and abs(values[1, -1] - values[0, 0]) < SWAP_EIGVAL_TOL
    )
    return BranchCurves(thetas, values, vectors, swapped)
