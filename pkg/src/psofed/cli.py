"""Command-line entry point: ``psofed run|analyze|compare|dump-data``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from . import analysis, harness
from .errors import DivergenceError, InvalidArgument

# flag -> ExperimentConfig field
_EXPERIMENT_FLAGS = {
    "clients": "num_clients", "dim": "dim", "window": "window", "share": "share",
    "shift": "shift", "selected": "selected", "step": "step", "scheme": "scheme",
    "algorithm": "algorithm", "rounds": "rounds", "runs": "runs", "seed": "seed",
    "bandwidth": "bandwidth", "test_per_client": "test_per_client", "workers": "workers",
}


def _add_experiment_flags(p: argparse.ArgumentParser):
    p.add_argument("--preset", choices=sorted(harness.PRESETS), default="desk")
    p.add_argument("--clients", "-K", type=int)
    p.add_argument("--dim", "-D", type=int)
    p.add_argument("--window", "-L", type=int)
    p.add_argument("--share", "-M", type=int)
    p.add_argument("--shift", "--tau", type=int)
    p.add_argument("--selected", "-S", type=int, help="clients selected per round")
    p.add_argument("--step", "--mu", type=float)
    p.add_argument("--scheme", choices=["coordinated", "uncoordinated"])
    p.add_argument("--algorithm", choices=["online-fed", "pso-fed"])
    p.add_argument("--rounds", "-N", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--bandwidth", type=float)
    p.add_argument("--test-per-client", type=int)
    p.add_argument("--noisy-test", action="store_true", help="add observation noise to test targets")
    p.add_argument("--workers", type=int)


def _config_from_args(args) -> harness.ExperimentConfig:
    cfg = harness.PRESETS[args.preset]
    overrides = {field: getattr(args, flag) for flag, field in _EXPERIMENT_FLAGS.items()
                 if getattr(args, flag) is not None}
    if args.noisy_test:
        overrides["noiseless_test"] = False
    return replace(cfg, **overrides)


def cmd_run(args) -> int:
    cfg = _config_from_args(args)
    result = harness.run_experiment(cfg)
    path = harness.write_result(result, args.out)
    print(f"{result.label}: {result.rounds} rounds, {cfg.runs - len(result.excluded)} runs kept, "
          f"final mse {result.mse_db[-1]:.3f} dB, steady-state {harness.steady_state_db(result):.3f} dB")
    if result.excluded:
        print(f"warning: {len(result.excluded)} diverged runs excluded", file=sys.stderr)
    print(f"wrote {path}")
    return 0


def cmd_analyze(args) -> int:
    cfg = analysis.AnalysisConfig(
        num_clients=args.clients, dim=args.dim, window=args.window, share=args.share,
        shift=args.shift, selected=args.selected, scheme=args.scheme, rounds=args.rounds,
        bandwidth=args.bandwidth, noise_var=args.noise_var, corr_samples=args.corr_samples,
        seed=args.seed)
    problem = analysis.linear_problem(cfg)
    bound = problem.bound
    mu = args.step if args.step is not None else args.fraction * bound
    report = analysis.verify_mean_convergence(cfg, mu, args.trials, problem=problem)
    for line in report.lines():
        print(line)
    return 0


def cmd_compare(args) -> int:
    tables = [harness.read_table(p) for p in args.inputs]
    header, rows = harness.compare_runs(tables)
    harness.write_table(header, rows, args.out)
    print(f"wrote {args.out} ({len(header) - 1} columns, {len(rows)} rounds)")
    return 0


def cmd_dump(args) -> int:
    cfg = _config_from_args(args)
    path = harness.dump_streams(cfg, args.out, run=args.run)
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="psofed", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment and write its learning curve")
    _add_experiment_flags(p)
    p.add_argument("--out", "-o", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("analyze", help="step-size bound and Monte-Carlo mean-convergence check")
    p.add_argument("--clients", "-K", type=int, default=10)
    p.add_argument("--dim", "-D", type=int, default=16)
    p.add_argument("--window", "-L", type=int, default=4)
    p.add_argument("--share", "-M", type=int, default=8)
    p.add_argument("--shift", "--tau", type=int)
    p.add_argument("--selected", "-S", type=int, default=4)
    p.add_argument("--scheme", choices=["coordinated", "uncoordinated"], default="coordinated")
    p.add_argument("--rounds", "-N", type=int, default=2000)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--bandwidth", type=float, default=1.0)
    p.add_argument("--noise-var", type=float, default=1e-3)
    p.add_argument("--corr-samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--step", "--mu", type=float, help="absolute step size")
    group.add_argument("--fraction", type=float, default=0.5, help="step size as a fraction of the bound")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("compare", help="merge learning-curve CSVs into one wide table")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", "-o", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("dump-data", help="write generated client streams as CSV")
    _add_experiment_flags(p)
    p.add_argument("--run", type=int, default=0)
    p.add_argument("--out", "-o", required=True)
    p.set_defaults(func=cmd_dump)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InvalidArgument, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
