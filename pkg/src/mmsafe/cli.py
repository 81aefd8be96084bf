"""Command-line entry point: single-rollout driver, seed-matched batch
comparison, and the belief-convergence demo, with YAML configuration and
schema-stable CSV/JSON outputs.

Exit codes: 0 success, 2 configuration error, 3 runtime abort.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .controllers import METHODS
from .sim import (
    BatchMetrics,
    ConfigError,
    RolloutLog,
    ScenarioConfig,
    compute_metrics,
    config_from_mapping,
    config_to_nested,
    run_batch,
    run_inference_demo,
    run_rollout,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABORT = 3


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def load_config(path: str | None) -> ScenarioConfig:
    if path is None:
        return ScenarioConfig()
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(p.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file is not valid YAML: {exc}") from exc
    return config_from_mapping(raw)


def _apply_overrides(config: ScenarioConfig, args) -> ScenarioConfig:
    from dataclasses import replace

    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "method", None) is not None:
        updates["method"] = args.method
    return replace(config, **updates) if updates else config


def trajectory_header(n_goals: int) -> list[str]:
    cols = [
        "t", "r_x", "r_y", "v_R", "psi_R", "h_x", "v_x", "h_y", "v_y",
        "phi", "d", "active", "L0", "L1", "S", "area", "violation", "true_goal",
    ]
    cols += [f"b_{i}" for i in range(n_goals)]
    cols += ["uref_0", "uref_1", "u_0", "u_1"]
    cols += [f"k_{i}" for i in range(n_goals)]
    return cols


def write_trajectory_csv(log: RolloutLog, path: Path) -> None:
    n_goals = log.scenario.goals.n
    lines = [",".join(trajectory_header(n_goals))]
    for r in log.records:
        xr, xh = r.state.robot, r.state.human
        row = [
            _fmt(r.t), _fmt(xr[0]), _fmt(xr[1]), _fmt(xr[2]), _fmt(xr[3]),
            _fmt(xh[0]), _fmt(xh[1]), _fmt(xh[2]), _fmt(xh[3]),
            _fmt(r.phi), _fmt(r.d), str(int(r.active)),
            _fmt(r.l[0]), _fmt(r.l[1]), _fmt(r.s), _fmt(r.area),
            str(int(r.violation)), str(r.true_goal),
        ]
        row += [_fmt(b) for b in r.belief]
        row += [_fmt(r.u_ref[0]), _fmt(r.u_ref[1]), _fmt(r.u[0]), _fmt(r.u[1])]
        row += [_fmt(k) for k in r.k]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_summary_json(log: RolloutLog, path: Path) -> None:
    metrics = compute_metrics(log)
    summary = {
        "seed": log.config.seed,
        "method": log.config.method,
        "violations": metrics.violations,
        "goals_reached": metrics.goals,
        "area_mean": metrics.area_mean,
        "area_active_mean": metrics.area_active_mean,
        "aborted": log.aborted,
        "aborted_step": log.aborted_step,
        "n_records": len(log.records),
        "goal_positions": log.scenario.goals.positions().tolist(),
        "initial_robot_goal": np.asarray(log.scenario.robot_goal).tolist(),
        "config_fingerprint": log.config.fingerprint(),
    }
    path.write_text(json.dumps(summary, indent=2, allow_nan=True) + "\n", encoding="utf-8")


def write_manifest(out_dir: Path, command: str, config: ScenarioConfig,
                   seeds: list[int], outputs: list[Path], wall_s: float) -> None:
    manifest = {
        "tool": "mmsafe",
        "version": __version__,
        "command": command,
        "config": config_to_nested(config),
        "seeds": seeds,
        "outputs": [str(p.name) for p in outputs],
        "timings": {"wall_s": wall_s},
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
    )


def cmd_run(args) -> int:
    t0 = time.monotonic()
    config = _apply_overrides(load_config(args.config), args)
    out_dir = Path(args.out)
    log = run_rollout(config)
    out_dir.mkdir(parents=True, exist_ok=True)
    traj = out_dir / "trajectory.csv"
    summ = out_dir / "summary.json"
    write_trajectory_csv(log, traj)
    write_summary_json(log, summ)
    write_manifest(out_dir, "run", config, [config.seed], [traj, summ], time.monotonic() - t0)
    metrics = compute_metrics(log)
    print(
        f"rollout seed={config.seed} method={config.method}: "
        f"{metrics.violations} violations, {metrics.goals} goals, "
        f"mean area {metrics.area_mean:.1f}"
    )
    if log.aborted is not None:
        print(f"rollout aborted at step {log.aborted_step}: {log.aborted}", file=sys.stderr)
        return EXIT_ABORT
    return EXIT_OK


def _metrics_json(m: BatchMetrics) -> dict:
    return {
        "method": m.method,
        "n_rollouts": m.n_rollouts,
        "mean_violations": m.mean_violations,
        "mean_goals": m.mean_goals,
        "mean_area": m.mean_area,
        "per_rollout": m.per_rollout,
        "aborts": m.aborts,
        "config_fingerprint": m.config_fingerprint,
    }


def write_batch_outputs(results: dict, out_dir: Path) -> list[Path]:
    outputs = []
    for method, m in results.items():
        jpath = out_dir / f"metrics_{method}.json"
        jpath.write_text(json.dumps(_metrics_json(m), indent=2) + "\n", encoding="utf-8")
        outputs.append(jpath)
        cpath = out_dir / f"rollouts_{method}.csv"
        lines = ["seed,violations,goals,area,area_active,aborted"]
        pr = m.per_rollout
        for i, seed in enumerate(pr["seeds"]):
            lines.append(
                f"{seed},{pr['violations'][i]},{pr['goals'][i]},"
                f"{_fmt(pr['area'][i])},{_fmt(pr['area_active'][i])},{int(pr['aborted'][i])}"
            )
        cpath.write_text("\n".join(lines) + "\n", encoding="utf-8")
        outputs.append(cpath)
    return outputs


def print_batch_table(results: dict) -> None:
    methods = list(results)
    rows = [
        ("# safety violations per rollout", "mean_violations", "{:.3f}"),
        ("# goals reached per rollout", "mean_goals", "{:.3f}"),
        ("control set size (rad*m/s^2)", "mean_area", "{:.1f}"),
    ]
    name_w = max(len(r[0]) for r in rows)
    header = " " * name_w + "  " + "  ".join(f"{m.upper():>10}" for m in methods)
    print(header)
    for label, attr, fmt in rows:
        vals = "  ".join(f"{fmt.format(getattr(results[m], attr)):>10}" for m in methods)
        print(f"{label:<{name_w}}  {vals}")


def cmd_batch(args) -> int:
    t0 = time.monotonic()
    config = _apply_overrides(load_config(args.config), args)
    methods = tuple(m.strip() for m in args.methods.split(","))
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}; valid methods: {', '.join(METHODS)}")
    if args.n < 1:
        raise ConfigError("--n must be >= 1")
    out_dir = Path(args.out)
    results = run_batch(config, args.n, methods)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = write_batch_outputs(results, out_dir)
    seeds = [config.seed + i for i in range(args.n)]
    write_manifest(out_dir, "batch", config, seeds, outputs, time.monotonic() - t0)
    print_batch_table(results)
    return EXIT_OK


def cmd_infer_demo(args) -> int:
    t0 = time.monotonic()
    config = _apply_overrides(load_config(args.config), args)
    times, history, goals = run_inference_demo(config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    bpath = out_dir / "belief.csv"
    header = ["t"] + [f"b_{i}" for i in range(goals.n)]
    lines = [",".join(header)]
    for t, row in zip(times, history):
        lines.append(",".join([_fmt(t)] + [_fmt(b) for b in row]))
    bpath.write_text("\n".join(lines) + "\n", encoding="utf-8")
    write_manifest(out_dir, "infer-demo", config, [config.seed], [bpath], time.monotonic() - t0)
    print(f"belief evolution written to {bpath} (final: {np.round(history[-1], 4)})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmsafe",
        description="Safe-control comparison for a robot around a human with "
        "uncertain goals (SEA / N-MMSSA / O-MMSSA).",
    )
    parser.add_argument("--version", action="version", version=f"mmsafe {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute one rollout and write trajectory.csv + summary.json")
    run_p.add_argument("--config", help="YAML config file (defaults used when omitted)")
    run_p.add_argument("--seed", type=int, help="override the config seed")
    run_p.add_argument("--method", choices=METHODS, help="override the config method")
    run_p.add_argument("--out", default="mmsafe_out", help="output directory")
    run_p.set_defaults(func=cmd_run)

    batch_p = sub.add_parser("batch", help="seed-matched batch comparison across methods")
    batch_p.add_argument("--config", help="YAML config file")
    batch_p.add_argument("--seed", type=int, help="override the base seed")
    batch_p.add_argument("--n", type=int, default=100, help="rollouts per method")
    batch_p.add_argument(
        "--methods", default=",".join(METHODS), help="comma-separated method list"
    )
    batch_p.add_argument("--out", default="mmsafe_out", help="output directory")
    batch_p.set_defaults(func=cmd_batch)

    demo_p = sub.add_parser("infer-demo", help="belief-convergence demo (no robot interference)")
    demo_p.add_argument("--config", help="YAML config file")
    demo_p.add_argument("--seed", type=int, help="override the config seed")
    demo_p.add_argument("--out", default="mmsafe_out", help="output directory")
    demo_p.set_defaults(func=cmd_infer_demo)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # runtime failures map to the abort code
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
