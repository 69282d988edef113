"""Command line entry point: ``arsearch {train,sweep,lqr-bench,report,replay}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from arsearch import harness
from arsearch.core import ArsConfig
from arsearch.envs import ENV_NAMES
from arsearch.rng import DEFAULT_TABLE_LENGTH, ConfigError


def _floats(text):
    return [float(v) for v in text.split(",")]


def _ints(text):
    return [int(v) for v in text.split(",")]


def _add_common(p: argparse.ArgumentParser, lists: bool):
    conv_f, conv_i = (_floats, _ints) if lists else (float, int)
    p.add_argument("--env", default="quadratic", help=f"one of {', '.join(ENV_NAMES)}")
    p.add_argument("--env-arg", action="append", default=[], metavar="KEY=VALUE",
                   help="extra environment argument (JSON value), repeatable")
    p.add_argument("--alpha", type=conv_f, help="step size (default 0.02)")
    p.add_argument("--nu", type=conv_f, help="exploration noise (default 0.02)")
    p.add_argument("--directions", "-N", type=conv_i, help="directions per iteration (default 8)")
    p.add_argument("--top-b", type=conv_i, help="top directions kept (V1t/V2t; default N)")
    p.add_argument("--version", default="V1", help="V1, V1t, V2 or V2t" + (" (comma separated)" if lists else ""))
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--max-episodes", type=int, default=None)
    p.add_argument("--max-timesteps", type=int, default=None)
    p.add_argument("--threshold", type=float, default=None, help="reward threshold for the metrics")
    p.add_argument("--stop-at-threshold", action="store_true")
    p.add_argument("--budget", type=float, default=None, help="timestep budget for the averaged max reward")
    p.add_argument("--eval-every", type=int, default=10)
    p.add_argument("--eval-rollouts", type=int, default=100)
    p.add_argument("--table-length", type=int, default=DEFAULT_TABLE_LENGTH)
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out-dir", required=True, type=Path)


def _env_kwargs(items):
    out = {}
    for item in items:
        key, _, value = item.partition("=")
        try:
            out[key.replace("-", "_")] = json.loads(value)
        except json.JSONDecodeError:
            out[key.replace("-", "_")] = value
    return out


GRID_DEFAULTS = {"alpha": 0.02, "nu": 0.02, "num_directions": 8}


def _spec_from_args(args, seeds, lists: bool) -> harness.SweepSpec:
    stop = {k: v for k, v in (("max_iterations", args.iterations), ("max_episodes", args.max_episodes),
                              ("max_timesteps", args.max_timesteps)) if v is not None}
    if args.stop_at_threshold:
        stop["reward_threshold"] = args.threshold
    if not stop:
        stop = {"max_iterations": 100}
    preset = getattr(args, "preset", None)
    grid = {"version": args.version.split(",")}
    given = {"alpha": args.alpha, "nu": args.nu, "num_directions": args.directions, "top_b": args.top_b}
    for key, value in given.items():
        if value is None:
            if preset is None and key in GRID_DEFAULTS:
                grid[key] = [GRID_DEFAULTS[key]]
        else:
            grid[key] = value if lists else [value]
    spec = dict(
        env=args.env, grid=grid, stop=stop, eval_every=args.eval_every, eval_rollouts=args.eval_rollouts,
        horizon=args.horizon, table_length=args.table_length, env_kwargs=_env_kwargs(args.env_arg),
        threshold=args.threshold, budget=args.budget,
    )
    spec.update(seeds)
    if preset:
        spec["preset"] = preset
    return harness.SweepSpec.from_dict(spec)


def _print_rows(rows):
    if not rows:
        return
    cols = list(rows[0])
    print("\t".join(cols))
    for r in rows:
        print("\t".join(harness._fmt(r[c]) for c in cols))


def cmd_train(args):
    spec = _spec_from_args(args, {"seeds": [args.seed]}, lists=False)
    res = harness.run_experiment(spec, args.out_dir, args.workers)
    _print_rows(res["runs"])


def cmd_sweep(args):
    if args.config:
        spec = harness.SweepSpec.from_dict(json.loads(Path(args.config).read_text()))
    else:
        seeds = {"seeds": args.seeds} if args.seeds else {"seed_count": args.seed_count,
                                                          "seed_sampler": args.seed_sampler}
        spec = _spec_from_args(args, seeds, lists=True)
    res = harness.run_experiment(spec, args.out_dir, args.workers)
    _print_rows(res["summary"])


def cmd_lqr_bench(args):
    config = ArsConfig(alpha=args.alpha, nu=args.nu, num_directions=args.directions, version=args.version,
                       table_length=args.table_length)
    res = harness.lqr_bench(args.out_dir, config, args.seeds or list(range(args.seed_count)),
                            args.budgets, args.nominal_budgets, args.nominal_trials,
                            args.nominal_rollout_length, args.horizon, args.workers)
    print("ARS")
    _print_rows(res["ars"])
    print("nominal")
    _print_rows(res["nominal"])


def cmd_report(args):
    _print_rows(harness.report(args.out_dir, verify=not args.no_verify))


def cmd_replay(args):
    res = harness.replay(args.manifest, args.out_dir, args.workers)
    _print_rows(res["summary"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="arsearch", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="single training run")
    _add_common(p, lists=False)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="hyperparameter grid x seeds")
    _add_common(p, lists=True)
    p.add_argument("--config", type=Path, help="JSON sweep spec (overrides the grid flags)")
    p.add_argument("--preset", choices=sorted(harness.PRESETS))
    p.add_argument("--seeds", type=_ints)
    p.add_argument("--seed-count", type=int, default=3)
    p.add_argument("--seed-sampler", type=int, default=0)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("lqr-bench", help="ARS vs nominal control on the LQR benchmark")
    p.add_argument("--alpha", type=float, default=0.0015)
    p.add_argument("--nu", type=float, default=0.01)
    p.add_argument("--directions", "-N", type=int, default=4)
    p.add_argument("--version", default="V1")
    p.add_argument("--horizon", type=int, default=300)
    p.add_argument("--seeds", type=_ints)
    p.add_argument("--seed-count", type=int, default=20)
    p.add_argument("--budgets", type=_ints, default=[3000, 10000, 30000, 100000, 200000])
    p.add_argument("--nominal-budgets", type=_ints, default=[100, 300, 1000, 3000])
    p.add_argument("--nominal-trials", type=int, default=100)
    p.add_argument("--nominal-rollout-length", type=int, default=10)
    p.add_argument("--table-length", type=int, default=1_000_000)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir", required=True, type=Path)
    p.set_defaults(func=cmd_lqr_bench)

    p = sub.add_parser("report", help="recompute metrics from curve files")
    p.add_argument("out_dir", type=Path)
    p.add_argument("--no-verify", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("replay", help="rerun a manifest")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out-dir", required=True, type=Path)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"arsearch: configuration error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
