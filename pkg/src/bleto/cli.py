"""Command-line interface for running and comparing exploration missions.

Subcommands: ``run`` (one method), ``compare`` (all three methods on paired
seeds), ``inspect`` (summarize a trial directory).  Exit code 0 on success,
2 on configuration errors.
"""

import argparse
import json
import sys
from pathlib import Path

from .bench import (METHODS, ConfigError, ExperimentConfig, compare,
                    format_table, metrics_json_dict, run_trial)
from .infomap import load_detections_jsonl

EXIT_OK = 0
EXIT_CONFIG = 2


def _load_config(path):
    if path is None:
        return ExperimentConfig()
    try:
        return ExperimentConfig.from_dict(json.loads(Path(path).read_text()))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _cmd_run(args):
    config = _load_config(args.config)
    if args.method:
        config = config.for_method(args.method)
    seed = args.seed if args.seed is not None else config.seeds[0]
    out = Path(args.out) if args.out else None
    if args.trace and out is None:
        raise ConfigError("--trace needs --out to have somewhere to write")
    metrics = run_trial(config, seed, out_dir=out)
    if args.trace:
        _write_demo_traces(config, seed, out)
    print(json.dumps(metrics_json_dict(metrics), sort_keys=True, indent=2))
    return EXIT_OK


def _write_demo_traces(config, seed, out):
    """Per-iteration solver trace of the first coarse plan of this trial."""
    from .bench import build_scenario
    from .planner import CoverageMemory, ergodic_coarse_planner

    scenario = build_scenario(config, seed)
    mission = config.mission
    basis = mission.coarse_basis()
    memory = CoverageMemory(basis) if mission.use_memory else None
    if memory:
        memory.add([list(mission.start_pose[:2])])
    coarse_map = mission.initial_coarse_map()
    from .ergodic import map_coefficients
    from .solver import ErgodicProblem, solve
    from .dynamics import UnicycleModel
    import numpy as np

    phi = map_coefficients(basis, coarse_map)
    target = memory.residual_target(phi, mission.coarse_horizon) if memory else phi
    problem = ErgodicProblem(
        basis=basis, target_coefficients=target, model=UnicycleModel(),
        initial_state=np.asarray(mission.start_pose, dtype=float),
        horizon=mission.coarse_horizon, dt=mission.coarse_dt,
        control_weight=mission.coarse_control_weight * np.eye(2),
        bounds=mission.body_bounds())
    solve(problem, trace_path=out / "solver_trace.csv")


def _cmd_compare(args):
    config = _load_config(args.config)
    if args.seed is not None:
        config.seeds = (args.seed,)
    table = compare(config, out_dir=args.out)
    print(format_table(table), end="")
    return EXIT_OK


def _cmd_inspect(args):
    trial = Path(args.log)
    metrics_path = trial / "metrics.json"
    if not metrics_path.exists():
        raise ConfigError(f"no metrics.json under {trial}")
    metrics = json.loads(metrics_path.read_text())
    print(json.dumps(metrics, sort_keys=True, indent=2))
    detections_path = trial / "detections.jsonl"
    if detections_path.exists():
        events = load_detections_jsonl(detections_path)
        hits = [e for e in events if e.is_detection]
        print(f"events: {len(events)} images, {len(hits)} detections")
        for e in hits[: args.head]:
            print(f"  t={e.time:9.2f}  {e.label:<12} at "
                  f"({e.world_point[0]:.2f}, {e.world_point[1]:.2f})")
    for name in ("trajectory.csv", "map_final.pgm", "table.json"):
        p = trial / name
        if p.exists():
            print(f"artifact: {p}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bleto",
        description="Bi-level ergodic exploration missions and benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one mission")
    p_run.add_argument("--config", help="experiment config JSON")
    p_run.add_argument("--method", choices=sorted(METHODS))
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--out", help="trial output directory")
    p_run.add_argument("--trace", action="store_true",
                       help="also write a per-iteration solver trace")
    p_run.set_defaults(func=_cmd_run)

    p_cmp = sub.add_parser("compare", help="run all three methods, paired seeds")
    p_cmp.add_argument("--config", help="experiment config JSON")
    p_cmp.add_argument("--seed", type=int, help="restrict to a single seed")
    p_cmp.add_argument("--out", help="comparison output directory")
    p_cmp.set_defaults(func=_cmd_compare)

    p_ins = sub.add_parser("inspect", help="summarize a trial directory")
    p_ins.add_argument("--log", required=True, help="trial directory")
    p_ins.add_argument("--head", type=int, default=10,
                       help="detections to print")
    p_ins.set_defaults(func=_cmd_inspect)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
