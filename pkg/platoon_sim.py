#!/usr/bin/env python3
# platoon_sim.py - highway platoon simulator (train / eval / replay)
# ---------------------------------------------------------------
# - train : masked actor-critic on the scenario's training mix; writes stats CSV,
#           checkpoint.npz and a training curve.
# - eval  : seeded episodes under the FSM supervisor (LQR + projected policy),
#           optionally in parallel; writes a per-episode CSV report.
# - replay: re-simulates a trace and reports the first divergent step; can emit
#           position / speed / headway series (CSV + HTML).
#
# Quick start:
#   python platoon_sim.py eval --config configs/traffic_accidents.yaml --seeds 0..19 --jobs 4 --report out/report.csv
#   python platoon_sim.py eval --config configs/plain.yaml --seeds 0..2 --trace-dir out/traces
#   python platoon_sim.py replay --trace out/traces/plain_seed0.jsonl --emit-series out/series
#   python platoon_sim.py train --config configs/train_mix.yaml --seed 1 --out out/train
#
# Exit codes: 0 success, 1 configuration / input error, 2 failed episodes or replay divergence.

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from platoon.config import load_spec
from platoon.episode import parse_seeds, replay, run_eval
from platoon.errors import ConfigError, ReplayError, TrainingError
from platoon.training import train

LOG = logging.getLogger("platoon_sim")

EXIT_OK, EXIT_CONFIG, EXIT_FAILED = 0, 1, 2


# --------------
# Subcommands
# --------------

def cmd_train(args) -> int:
    spec = load_spec(args.config)
    cfg = spec.train
    if args.steps is not None:
        cfg = replace(cfg, total_steps=args.steps)
    if args.no_mask:
        cfg = replace(cfg, use_mask=False)
    print(f"[train] scenario={spec.name} seed={args.seed} steps={cfg.total_steps} mask={cfg.use_mask}")
    try:
        result = train(spec, args.seed, args.out, cfg, progress=not args.quiet)
    except TrainingError as exc:
        print(f"[train] halted: {exc} {json.dumps(exc.diagnostics, default=str)}", file=sys.stderr)
        return EXIT_FAILED
    last = result.stats.iloc[-1].to_dict() if not result.stats.empty else {}
    print(f"[train] checkpoint -> {result.checkpoint}")
    print(f"[train] last update: {json.dumps(last, default=float)}")
    return EXIT_OK


def cmd_eval(args) -> int:
    spec = load_spec(args.config)
    if args.no_mask:
        spec = replace(spec, twin=replace(spec.twin, enabled=False))
    seeds = parse_seeds(args.seeds) if args.seeds else list(spec.seeds)
    policy = args.checkpoint or args.policy
    print(f"[eval] scenario={spec.name} episodes={len(seeds)} jobs={args.jobs} policy={policy} "
          f"mask={spec.twin.enabled}")
    report = run_eval(spec, seeds, policy=policy, jobs=args.jobs, trace_dir=args.trace_dir)
    if args.report:
        Path(args.report).parent.mkdir(parents=True, exist_ok=True)
        report.to_csv(args.report)
        print(f"[eval] report -> {args.report}")
    summary = report.aggregate()
    print(json.dumps({"schema_version": 1, "kind": "eval_summary", "scenario": spec.name, **summary}), flush=True)
    if report.failed:
        print(f"[eval] {report.failed} episode(s) failed", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def cmd_replay(args) -> int:
    report = replay(args.trace, emit_series=args.emit_series)
    for path in report.outputs:
        print(f"[replay] wrote {path}")
    if report.ok:
        print(f"[replay] {report.steps_checked} steps re-simulated, no divergence")
        return EXIT_OK
    d = report.divergence
    print(f"[replay] divergence at step {d.step}: {', '.join(d.fields)}", file=sys.stderr)
    return EXIT_FAILED


# --------------
# CLI & bootstrap
# --------------

def build_arg_parser():
    p = argparse.ArgumentParser(
        prog="platoon-sim",
        description="Highway platoon simulator: LQR gap keeping, twin-world safety projection, masked RL.",
    )
    p.add_argument("--log-level", default="WARNING",
                   choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                   help="Logging level for library messages (stderr).")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="Train the data-driven strategy.")
    t.add_argument("--config", required=True, help="Scenario YAML file.")
    t.add_argument("--seed", type=int, default=0, help="Training seed.")
    t.add_argument("--out", required=True, help="Output directory for stats, checkpoint and curve.")
    t.add_argument("--steps", type=int, default=None, help="Override train.total_steps.")
    t.add_argument("--no-mask", action="store_true", help="Train without the twin-world action mask.")
    t.add_argument("--quiet", action="store_true", help="Hide the progress bar.")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="Run seeded evaluation episodes.")
    e.add_argument("--config", required=True, help="Scenario YAML file.")
    e.add_argument("--checkpoint", default=None, help="Policy checkpoint (.npz); overrides --policy.")
    e.add_argument("--policy", choices=["scripted", "random"], default="scripted",
                   help="Proposal policy when no checkpoint is given.")
    e.add_argument("--seeds", default=None, help="Seed range 'a..b' or list '1,2,3' (default: config seeds).")
    e.add_argument("--jobs", type=int, default=1, help="Parallel worker processes.")
    e.add_argument("--report", default=None, help="Per-episode CSV report path.")
    e.add_argument("--trace-dir", default=None, help="Write one JSONL trace per episode here.")
    e.add_argument("--no-mask", action="store_true", help="Disable the safety projector (ablation).")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("replay", help="Re-simulate a trace and check it step by step.")
    r.add_argument("--trace", required=True, help="Trace JSONL file.")
    r.add_argument("--emit-series", default=None, help="Directory for series.csv / series.html.")
    r.set_defaults(func=cmd_replay)

    return p


def main(argv=None) -> int:
    args = build_arg_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s [%(name)s]: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ReplayError) as exc:
        print(f"[{args.command}] error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
