"""Command-line interface for the encircling simulation pipeline.

Subcommands: ``encircle`` (one preset, full diagnostics), ``suite`` (all
eight presets plus the fidelity table), ``riemann`` (eigenvalue-sheet and
trajectory CSVs), ``synth`` (waveform export), ``tomo`` (tomography
roundtrip battery), ``verify`` (quick oracle/property battery).

Exit codes: 0 pass, 1 invariant failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import tomolab
from .dilation import dilation_trace
from .dynamics import BranchLabel, StartPoint, encircle_case, quasistatic_track
from .harness import (
    PRESET_IDS,
    ConfigError,
    RunConfig,
    emit_riemann,
    load_config,
    parse_preset,
    run_preset,
    run_suite,
)
from .model import NHParams, PathSpec, eigensystem
from .nvcontrol import NVConstants, carrier_freqs, export_waveform, synth_pulses

EXIT_PASS = 0
EXIT_INVARIANT = 1
EXIT_CONFIG = 2


def _base_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML run configuration")
    common.add_argument("--preset", choices=PRESET_IDS, help="preset case id")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--seed", type=int, help="noise RNG seed")
    noise = common.add_mutually_exclusive_group()
    noise.add_argument("--noise", dest="noise", action="store_true", default=None)
    noise.add_argument("--no-noise", dest="noise", action="store_false")
    common.add_argument("--format", choices=("csv", "json"), help="artifact format")

    parser = argparse.ArgumentParser(
        prog="epencircle",
        description="Simulate dynamically encircling an exceptional point.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("encircle", parents=[common], help="run one preset")
    sub.add_parser("suite", parents=[common], help="run all eight presets")
    sub.add_parser("riemann", parents=[common], help="emit eigenvalue sheet CSVs")
    sub.add_parser("synth", parents=[common], help="export a preset waveform")
    sub.add_parser("tomo", parents=[common], help="tomography roundtrip battery")
    sub.add_parser("verify", parents=[common], help="oracle/property battery")
    return parser


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    if args.seed is not None:
        cfg = replace(cfg, noise=replace(cfg.noise, seed=args.seed))
    if args.noise is not None:
        cfg = replace(cfg, noise=replace(cfg.noise, enabled=args.noise))
    if args.format is not None:
        cfg = replace(cfg, formats=(args.format,))
    if args.preset is not None:
        cfg = replace(cfg, preset=args.preset)
    return cfg


def _cmd_encircle(cfg: RunConfig) -> int:
    preset = cfg.preset or "A-cw-alpha"
    report = run_preset(preset, cfg)
    print(f"{preset}: {report.status}")
    ms = report.mode_switch.summary()
    print(
        f"  final branch {ms['final_label']} (overlap {ms['final_overlap']:.4f}), "
        f"min lmin(M-I) {report.min_lmin_metric:.3e}, "
        f"min P_minus {report.min_p_minus:.3e}"
    )
    print(
        f"  recovery fidelity min {min(report.f_recover_chi.min(), report.f_recover_minus.min()):.6f}, "
        f"pulse roundtrip {report.pulse_roundtrip_err:.3e}"
    )
    for failure in report.failures:
        print(f"  FAILED: {failure}")
    return EXIT_PASS if report.passed else EXIT_INVARIANT


def _cmd_suite(cfg: RunConfig) -> int:
    result = run_suite(cfg)
    for rep in result.reports:
        print(f"{rep.case_id}: {rep.status}")
        for failure in rep.failures:
            print(f"  FAILED: {failure}")
    print(
        f"table mean F_chi {result.mean_f_chi():.4f}, "
        f"mean F_psi {result.mean_f_psi():.4f}"
    )
    return EXIT_PASS if result.passed else EXIT_INVARIANT


def _cmd_riemann(cfg: RunConfig) -> int:
    preset = cfg.preset or "A-cw-alpha"
    grid_path, traj_path = emit_riemann(cfg, preset)
    print(f"wrote {grid_path}")
    print(f"wrote {traj_path}")
    return EXIT_PASS


def _cmd_synth(cfg: RunConfig) -> int:
    preset = cfg.preset or "A-cw-alpha"
    start, clockwise, _ = parse_preset(preset)
    trace = dilation_trace(cfg.path_for(start, clockwise), cfg.dilation)
    wave = synth_pulses(trace, cfg.nv)
    out_dir = cfg.out_dir if cfg.out_dir is not None else Path(".")
    out_dir.mkdir(parents=True, exist_ok=True)
    for fmt in cfg.formats:
        target = out_dir / f"{preset}-waveform.{fmt}"
        export_waveform(wave, target, fmt=fmt, constants=cfg.nv)
        print(f"wrote {target}")
    return EXIT_PASS


def tomography_battery(
    pl: tomolab.PLModel, seed: int, n_states: int = 1000
) -> list[tuple[str, bool, str]]:
    """Roundtrip, least-squares, and MLE checks on random states."""
    rng = np.random.default_rng(seed)
    worst_rt = worst_lsq = 0.0
    for _ in range(n_states):
        a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        rho = a @ a.conj().T
        rho /= np.trace(rho).real
        e = tomolab.simulate_readout(rho, pl)
        block = np.array([[rho[0, 0], rho[0, 2]], [rho[2, 0], rho[2, 2]]])
        r_closed = tomolab.invert_readout(e, pl)
        r_lsq = tomolab.lsq_invert(e, pl)
        worst_rt = max(worst_rt, float(np.max(np.abs(r_closed - block))))
        worst_lsq = max(worst_lsq, float(np.max(np.abs(r_lsq - r_closed))))

    worst_psd = -np.inf
    worst_trace = worst_idem = 0.0
    for _ in range(n_states):
        h = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        h = 0.5 * (h + h.conj().T) + np.eye(4)
        proj = tomolab.mle_project(h)
        worst_psd = max(worst_psd, -float(np.min(np.linalg.eigvalsh(proj))))
        worst_trace = max(worst_trace, abs(float(np.real(np.trace(proj))) - 1.0))
        worst_idem = max(
            worst_idem, float(np.max(np.abs(tomolab.mle_project(proj) - proj)))
        )
    return [
        ("readout roundtrip <= 1e-10", worst_rt <= 1e-10, f"worst {worst_rt:.3e}"),
        ("lsq agreement <= 1e-8", worst_lsq <= 1e-8, f"worst {worst_lsq:.3e}"),
        ("mle PSD", worst_psd <= 1e-12, f"worst eigenvalue deficit {worst_psd:.3e}"),
        ("mle trace one", worst_trace <= 1e-12, f"worst {worst_trace:.3e}"),
        ("mle idempotent <= 1e-12", worst_idem <= 1e-12, f"worst {worst_idem:.3e}"),
    ]


def _print_battery(checks: list[tuple[str, bool, str]]) -> int:
    ok = True
    for name, passed, detail in checks:
        print(f"{'PASS' if passed else 'FAIL'} {name} ({detail})")
        ok = ok and passed
    return EXIT_PASS if ok else EXIT_INVARIANT


def _cmd_tomo(cfg: RunConfig) -> int:
    return _print_battery(tomography_battery(cfg.pl, cfg.noise.seed))


def verify_battery(cfg: RunConfig) -> list[tuple[str, bool, str]]:
    """Quick oracle checks across the model, dynamics, and tomography."""
    checks: list[tuple[str, bool, str]] = []

    ep = eigensystem(NHParams(delta=0.0, g=1.0))
    gap = abs(ep.e_alpha - ep.e_beta)
    target = np.array([1.0, -1.0j]) / np.sqrt(2.0)
    direction = 1.0 - abs(np.vdot(target, ep.v_alpha))
    checks.append(
        (
            "EP degeneracy and coalesced vector",
            bool(ep.degenerate and gap <= 1e-12 and direction <= 1e-10),
            f"gap {gap:.2e}, direction defect {direction:.2e}",
        )
    )

    one = quasistatic_track(PathSpec(), loops=1)
    two = quasistatic_track(PathSpec(), loops=2)
    ret = abs(two.values[0, -1] - two.values[0, 0])
    checks.append(
        (
            "quasistatic swap after one loop, return after two",
            bool(one.swapped and ret <= 1e-6),
            f"swapped {one.swapped}, two-loop mismatch {ret:.2e}",
        )
    )

    for start, clockwise, label, want in (
        (StartPoint.A, True, BranchLabel.ALPHA, BranchLabel.BETA),
        (StartPoint.B, False, BranchLabel.BETA, BranchLabel.ALPHA),
    ):
        rep = encircle_case(start, clockwise, label, cfg.integrator)
        checks.append(
            (
                f"mode switch {start.value}-{'cw' if clockwise else 'ccw'}-{label.value}"
                f" -> {want.value}",
                bool(rep.final_label is want and rep.final_overlap >= 0.99),
                f"final {rep.final_label.value} overlap {rep.final_overlap:.4f}",
            )
        )

    checks.extend(tomography_battery(cfg.pl, cfg.noise.seed, n_states=200))

    mw1, mw2 = carrier_freqs(NVConstants())
    hyperfine_split = (mw2 - mw1) / (2.0 * np.pi)
    checks.append(
        (
            "carrier separation equals hyperfine",
            bool(abs(hyperfine_split - NVConstants().A_hf) <= 1e-9),
            f"separation {hyperfine_split:.6f} MHz",
        )
    )
    return checks


def _cmd_verify(cfg: RunConfig) -> int:
    return _print_battery(verify_battery(cfg))


_COMMANDS = {
    "encircle": _cmd_encircle,
    "suite": _cmd_suite,
    "riemann": _cmd_riemann,
    "synth": _cmd_synth,
    "tomo": _cmd_tomo,
    "verify": _cmd_verify,
}


def main(argv: list[str] | None = None) -> int:
    parser = _base_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve_config(args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
