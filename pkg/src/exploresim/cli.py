"""Command-line entry point: run, batch, gen-env.

Exit codes: 0 when a run finishes (completed or budget-limited homing),
2 when a run aborts, 1 on configuration errors.
"""

from __future__ import annotations

import argparse
import os
import sys

from .harness import ConfigError, build_env, load_scenario, run_batch, run_scenario
from .voxel_map import dump_voxmap


def _write_run_outputs(log, out_dir: str, dump_map: bool, dump_graph: bool) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "metrics.csv"), "w") as fh:
        fh.write(log.metrics_csv())
    with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
        fh.write("termination=%s\n" % log.termination)
        fh.write("steps=%d\n" % len(log.rows))
        fh.write("elapsed_s=%.3f\n" % (log.rows[-1].t_s if log.rows else 0.0))
        fh.write("explored_m3=%.6f\n" % (log.rows[-1].explored_m3 if log.rows else 0.0))
    if dump_map and log.grid is not None:
        dump_voxmap(log.grid, os.path.join(out_dir, "map.voxmap"))
    if dump_graph and log.graph is not None:
        log.graph.dump(os.path.join(out_dir, "graph.txt"))


def _cmd_run(args) -> int:
    scenario = load_scenario(args.config)
    if args.planner:
        scenario.planner = args.planner
    if args.seed is not None:
        scenario.seed = args.seed
    log = run_scenario(scenario, log_wall_times=args.wall_times)
    _write_run_outputs(log, args.out, args.dump_map, args.dump_graph)
    print("termination=%s explored_m3=%.6f out=%s" % (
        log.termination, log.rows[-1].explored_m3 if log.rows else 0.0, args.out))
    return 2 if log.termination == "aborted" else 0


def _cmd_batch(args) -> int:
    scenario = load_scenario(args.config)
    if args.planner:
        scenario.planner = args.planner
    logs, result = run_batch(scenario, args.runs, log_wall_times=args.wall_times)
    os.makedirs(args.out, exist_ok=True)
    for seed, log in zip(result.seeds, logs):
        run_dir = os.path.join(args.out, "run_%d" % seed)
        _write_run_outputs(log, run_dir, args.dump_map, args.dump_graph)
    with open(os.path.join(args.out, "summary.txt"), "w") as fh:
        fh.write(result.summary_text())
    with open(os.path.join(args.out, "envelope.csv"), "w") as fh:
        fh.write(result.envelope_csv())
    print("runs=%d mean_final_m3=%.6f out=%s" % (
        args.runs, sum(result.finals) / len(result.finals), args.out))
    return 2 if any(t == "aborted" for t in result.terminations) else 0


def _cmd_gen_env(args) -> int:
    scenario = load_scenario(args.spec)
    env = build_env(scenario, scenario.seed)
    dump_voxmap(env.grid, args.out)
    with open(args.out + ".meta", "w") as fh:
        fh.write("home=%.6f %.6f %.6f\n" % tuple(env.home))
    print("wrote %s (%d voxels), home %.2f %.2f %.2f" % (
        args.out, env.grid.total_voxels, env.home[0], env.home[1], env.home[2]))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="explore",
        description="Voxel-world exploration planner simulator: bifurcated "
                    "local/global planner plus frontier and NBV baselines.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one seeded mission")
    run.add_argument("--config", required=True, help="scenario file")
    run.add_argument("--planner", choices=["mb", "frontier", "nbvp"])
    run.add_argument("--seed", type=int)
    run.add_argument("--out", default="explore_out")
    run.add_argument("--dump-map", action="store_true")
    run.add_argument("--dump-graph", action="store_true")
    run.add_argument("--wall-times", action="store_true",
                     help="log real planning wall time (breaks byte-determinism)")
    run.set_defaults(func=_cmd_run)

    batch = sub.add_parser("batch", help="run n seeded missions and aggregate")
    batch.add_argument("--config", required=True)
    batch.add_argument("--runs", type=int, required=True)
    batch.add_argument("--planner", choices=["mb", "frontier", "nbvp"])
    batch.add_argument("--out", default="explore_batch")
    batch.add_argument("--dump-map", action="store_true")
    batch.add_argument("--dump-graph", action="store_true")
    batch.add_argument("--wall-times", action="store_true")
    batch.set_defaults(func=_cmd_batch)

    gen = sub.add_parser("gen-env", help="generate a VOXMAP environment file")
    gen.add_argument("--spec", required=True, help="scenario file with [environment]")
    gen.add_argument("--out", required=True, help="output .voxmap path")
    gen.set_defaults(func=_cmd_gen_env)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
