"""
Micro-benchmark for the per-step hot paths: raw world stepping, twin-world projection,
the admissible mask, a single twin rollout on the array kernel against the
scalar reference, and a full supervised step.
Measures wall time per call (no rendering, no trace recording).

Run examples:
  python tools/bench_env.py
  python tools/bench_env.py --suite
  python tools/bench_env.py --config configs/traffic_accidents.yaml --n 300 --csv
"""
from __future__ import annotations

import argparse
import time
from dataclasses import replace

import numpy as np

from platoon.config import ScenarioSpec, load_spec
from platoon.dynamics import HighLevelAction
from platoon.env import Episode, JointAction, encode_action, env_step
from platoon.policies import ScriptedPolicy
from platoon.supervisor import Supervisor
from platoon.twin import TwinWorld, admissible_mask, project_actions, reference_rollout, rollout_twin

KEYS = ["target", "horizon", "n", "mean_ms", "median_ms", "p95_ms", "max_ms", "calls_per_sec"]


def _timed(fn, n: int) -> np.ndarray:
    times_ns = []
    for _ in range(n):
        t0 = time.perf_counter_ns()
        fn()
        times_ns.append(time.perf_counter_ns() - t0)
    return np.asarray(times_ns, dtype=np.float64) / 1e6


def bench(spec: ScenarioSpec, target: str, n: int = 200, seed: int = 0) -> dict:
    """Timing stats for one hot path; the episode is re-created whenever it ends."""
    state = {"episode": Episode(spec, seed, record=False), "seed": seed}
    supervisor = Supervisor(spec, ScriptedPolicy())

    def fresh() -> Episode:
        ep = state["episode"]
        if ep.done:
            state["seed"] += 1
            ep = state["episode"] = Episode(spec, state["seed"], record=False)
        return ep

    def step_raw():
        ep = fresh()
        env_step(ep, encode_action([HighLevelAction.IDLE] * ep.n))

    def project():
        ep = fresh()
        project_actions(ep.world, ep.controls, ep.platoon_ids, JointAction.uniform(HighLevelAction.FASTER, ep.n),
                        spec.twin)

    def mask():
        ep = fresh()
        admissible_mask(ep.world, ep.controls, ep.platoon_ids, spec.twin)

    def _twin() -> tuple[TwinWorld, dict]:
        ep = fresh()
        return TwinWorld.from_world(ep.world, ep.controls, ep.platoon_ids, spec.twin), dict.fromkeys(
            ep.platoon_ids, HighLevelAction.IDLE)

    def rollout():
        twin, idle = _twin()
        rollout_twin(twin, idle, spec.twin.horizon)

    def reference():
        twin, idle = _twin()
        reference_rollout(twin, idle, spec.twin.horizon)

    def supervised():
        supervisor.step(fresh())

    fns = {"step": step_raw, "project": project, "mask": mask, "rollout": rollout, "reference": reference,
           "supervised": supervised}
    times_ms = _timed(fns[target], n)
    if not times_ms.size:
        return {}
    return {
        "target": target,
        "horizon": spec.twin.horizon,
        "n": int(times_ms.size),
        "mean_ms": float(times_ms.mean()),
        "median_ms": float(np.median(times_ms)),
        "p95_ms": float(np.percentile(times_ms, 95)),
        "max_ms": float(times_ms.max()),
        "calls_per_sec": float(1000.0 / times_ms.mean()),
    }


def main() -> None:
    ap = argparse.ArgumentParser(description="Benchmark per-step simulation and safety-projection cost.")
    ap.add_argument("--config", default="configs/plain.yaml", help="scenario YAML (default configs/plain.yaml)")
    ap.add_argument("--n", type=int, default=200, help="calls to measure per target (default 200)")
    ap.add_argument("--target", choices=["step", "project", "mask", "rollout", "reference", "supervised"], default="supervised")
    ap.add_argument("--suite", action="store_true", help="every target over a small horizon sweep")
    ap.add_argument("--csv", action="store_true", help="CSV output")
    args = ap.parse_args()

    spec = load_spec(args.config)
    rows = []
    if args.suite:
        for horizon in (8, 15, 30):
            sized = replace(spec, twin=replace(spec.twin, horizon=horizon))
            for target in ("step", "project", "mask", "rollout", "reference", "supervised"):
                rows.append(bench(sized, target, n=args.n))
    else:
        rows.append(bench(spec, args.target, n=args.n))

    if args.csv:
        print(",".join(KEYS))
        for r in rows:
            print(",".join(str(r.get(k, "")) for k in KEYS))
    else:
        for r in rows:
            print(r)


if __name__ == "__main__":
    main()
