"""Command-line interface.

``holosim run <config.json>`` executes a scenario and writes CSV tables,
figures, and a manifest; ``holosim replay <manifest.json>`` re-runs the
embedded config and verifies every output byte-for-byte.  Exit codes:
0 success, 1 replay mismatch, 2 configuration error, 3 numerical failure.
"""

import argparse
import sys

import numpy as np

from .errors import ConfigError, HolosimError


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="holosim",
        description="Dense-array MIMO channel simulation scenarios",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario config")
    run.add_argument("config", help="path to a scenario JSON config")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--trials", type=int, help="override the trial count")
    run.add_argument("--output", help="override the output directory")
    run.add_argument("--workers", type=int, help="worker threads for trials")
    run.add_argument("--no-figures", action="store_true", help="skip figure rendering")

    replay = sub.add_parser("replay", help="re-run a manifest and verify outputs")
    replay.add_argument("manifest", help="path to a manifest.json")
    replay.add_argument("--output", help="directory for the replayed outputs")
    replay.add_argument("--workers", type=int, help="worker threads for trials")

    synth = sub.add_parser(
        "synth-measurement", help="write a synthetic virtual-probe channel CSV"
    )
    synth.add_argument("output", help="destination channel CSV path")
    synth.add_argument("--seed", type=int, default=1234)
    synth.add_argument("--receive-grid", default="16x16x0.125", help="COUNTxCOUNTxSPACING")
    synth.add_argument("--source-grid", default="4x4x0.5", help="COUNTxCOUNTxSPACING")

    pattern = sub.add_parser(
        "make-pattern-file",
        help="write an analytic-dipole embedded-pattern CSV (EM-simulation stand-in)",
    )
    pattern.add_argument("output", help="destination pattern CSV path")
    pattern.add_argument("--efficiency", type=float, default=1.0, help="simulated chi_s")
    pattern.add_argument("--axis", choices=("x", "y", "z"), default="y")
    pattern.add_argument("--step-deg", type=float, default=5.0, help="angular grid step")
    return parser


def _parse_grid(text, flag):
    parts = text.lower().split("x")
    if len(parts) != 3:
        raise ConfigError(f"{flag}: expected COUNTxCOUNTxSPACING, got {text!r}")
    try:
        return int(parts[0]), int(parts[1]), float(parts[2])
    except ValueError as exc:
        raise ConfigError(f"{flag}: {exc}") from exc


def _cmd_run(args):
    from .experiments import load_config, run_scenario

    config = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.output is not None:
        overrides["output"] = args.output
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.no_figures:
        overrides["figures"] = False
    if overrides:
        config = config.replace(**overrides)
        config.validate()
    table = run_scenario(config)
    print(f"{config.scenario}: {len(table.rows)} result rows -> {table.output_dir}")
    for name in sorted(table.manifest["outputs"]):
        print(f"  {name}")
    return 0


def _cmd_replay(args):
    from .experiments import replay_manifest

    ok, mismatches = replay_manifest(args.manifest, output=args.output, workers=args.workers)
    if ok:
        print("replay verified: all outputs byte-identical")
        return 0
    print("replay MISMATCH in: " + ", ".join(mismatches))
    return 1


def _cmd_synth(args):
    from .experiments import generate_synthetic_measurement

    receive = _parse_grid(args.receive_grid, "--receive-grid")
    source = _parse_grid(args.source_grid, "--source-grid")
    realization = generate_synthetic_measurement(
        args.output, args.seed, receive_grid=receive, source_grid=source
    )
    n_r, n_s = realization.shape
    print(f"wrote {n_r}x{n_s} channel matrix to {args.output}")
    return 0


def _cmd_pattern(args):
    from .patterns import dipole_pattern, write_pattern_file

    if not 0.0 <= args.efficiency <= 1.0:
        raise ConfigError("--efficiency: must lie in [0, 1]")
    if args.step_deg <= 0:
        raise ConfigError("--step-deg: must be positive")
    axis = {"x": (1.0, 0, 0), "y": (0, 1.0, 0), "z": (0, 0, 1.0)}[args.axis]
    theta = np.arange(0.0, 180.0 + 1e-9, args.step_deg)
    phi = np.arange(0.0, 360.0 + 1e-9, args.step_deg)
    write_pattern_file(
        args.output, [dipole_pattern(axis)], [args.efficiency], theta, phi
    )
    print(f"wrote 1-element dipole pattern (chi_s={args.efficiency}) to {args.output}")
    return 0


def main(argv=None):
    args = _build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "replay": _cmd_replay,
        "synth-measurement": _cmd_synth,
        "make-pattern-file": _cmd_pattern,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (HolosimError, np.linalg.LinAlgError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
