"""
Episode orchestration: single runs, seeded evaluation sweeps and trace replay.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import pandas as pd
import plotly.graph_objects as go
from plotly.subplots import make_subplots

from .config import ScenarioSpec, spec_from_dict
from .dynamics import ControlCommand
from .env import Episode
from .errors import ConfigError, PlatoonError, ReplayError
from .metrics import MetricsReport, MetricsRow, metrics_from_trace
from .policies import load_policy
from .supervisor import Supervisor
from .trace import read_trace, write_trace
from .world import step_world

LOG = logging.getLogger(__name__)


@dataclass
class EpisodeResult:
    row: MetricsRow
    header: dict[str, Any]
    steps: list[dict[str, Any]] = field(default_factory=list)

    def write(self, path: str | Path) -> Path:
        return write_trace(path, self.header, self.steps, self.row.to_dict())


def run_episode(spec: ScenarioSpec, seed: int, policy: str = "scripted") -> EpisodeResult:
    """Run one seeded episode under the FSM supervisor until it terminates."""
    episode = Episode(spec, seed, record=True)
    supervisor = Supervisor(spec, load_policy(policy, spec, seed))
    while not episode.done:
        supervisor.step(episode)
    row = metrics_from_trace(
        episode.trace, seed, spec.scenario.kind.value, spec.road.zone_end, spec.world.halt_speed
    )
    header = {"spec": spec.to_dict(), "seed": seed, "policy": policy, "reason": episode.reason}
    return EpisodeResult(row, header, episode.trace)


def _eval_worker(spec: ScenarioSpec, seed: int, policy: str, trace_dir: str | None) -> MetricsRow:
    try:
        result = run_episode(spec, seed, policy)
    except ConfigError:
        raise
    except Exception as exc:  # noqa: BLE001 - a crashed episode becomes a failed row
        LOG.error("episode seed=%d failed: %s", seed, exc)
        return MetricsRow.failed(seed, spec.scenario.kind.value, f"{type(exc).__name__}: {exc}")
    if trace_dir is not None:
        result.write(Path(trace_dir) / f"{spec.name}_seed{seed}.jsonl")
    return result.row


def run_eval(
    spec: ScenarioSpec,
    seeds: Sequence[int],
    policy: str = "scripted",
    jobs: int = 1,
    trace_dir: str | Path | None = None,
) -> MetricsReport:
    """Evaluate `seeds` independently; rows come back in seed order whatever `jobs` is."""
    if not seeds:
        raise ConfigError("no seeds to evaluate", "seeds")
    load_policy(policy, spec)  # fail fast on a bad checkpoint
    trace_dir = None if trace_dir is None else str(trace_dir)
    if jobs <= 1:
        rows = [_eval_worker(spec, s, policy, trace_dir) for s in seeds]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_eval_worker, spec, s, policy, trace_dir) for s in seeds]
            rows = [f.result() for f in futures]
    return MetricsReport(rows)


# ----------------------------
# Replay
# ----------------------------
@dataclass(frozen=True)
class Divergence:
    step: int
    fields: tuple[str, ...]


@dataclass
class ReplayReport:
    steps_checked: int
    divergence: Divergence | None
    series: pd.DataFrame | None = None
    outputs: list[Path] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.divergence is None


def _compare(step: int, expected: list[dict], actual: list[dict]) -> Divergence | None:
    exp = {v["id"]: v for v in expected}
    act = {v["id"]: v for v in actual}
    diffs = [f"vehicle {vid}: missing" for vid in sorted(exp.keys() ^ act.keys())]
    for vid in sorted(exp.keys() & act.keys()):
        diffs += [f"vehicle {vid}: {k}" for k in exp[vid] if exp[vid][k] != act[vid].get(k)]
    return Divergence(step, tuple(diffs)) if diffs else None


def headway_series(steps: Sequence[dict]) -> pd.DataFrame:
    """Long-format platoon series: step, vehicle, s, y, v and the gap to the platoon predecessor."""
    rows = []
    for rec in steps:
        platoon = sorted((v for v in rec["vehicles"] if v["in_platoon"]), key=lambda v: (-v["s"], v["id"]))
        ahead = None
        for v in platoon:
            gap = math.nan if ahead is None else (ahead["s"] - v["s"]) - 0.5 * (ahead["length"] + v["length"])
            rows.append({"step": rec["step"], "vehicle": v["id"], "s": v["s"], "y": v["y"], "v": v["v"], "headway": gap})
            ahead = v
    return pd.DataFrame(rows, columns=["step", "vehicle", "s", "y", "v", "headway"])


def plot_series(series: pd.DataFrame, path: str | Path) -> Path:
    fig = make_subplots(rows=3, cols=1, shared_xaxes=True, subplot_titles=("position s [m]", "speed [m/s]", "headway [m]"))
    for vid, part in series.groupby("vehicle"):
        for row, col in ((1, "s"), (2, "v"), (3, "headway")):
            fig.add_trace(
                go.Scatter(x=part["step"], y=part[col], mode="lines", name=f"veh {vid}", legendgroup=str(vid),
                           showlegend=row == 1),
                row=row, col=1,
            )
    fig.update_layout(height=800, title="platoon replay")
    fig.update_xaxes(title_text="step", row=3, col=1)
    path = Path(path)
    fig.write_html(str(path), include_plotlyjs="cdn")
    return path


def replay(trace_path: str | Path, emit_series: str | Path | None = None) -> ReplayReport:
    """Re-simulate a trace from its seed and recorded commands; report the first mismatch."""
    header, steps, _ = read_trace(trace_path)
    try:
        spec = spec_from_dict(header["spec"])
        seed = int(header["seed"])
    except (KeyError, TypeError, ValueError, ConfigError) as exc:
        raise ReplayError(f"trace header is not replayable: {exc}") from exc

    world = spec.build_world(seed)
    divergence = None
    checked = 0
    for rec in steps:
        try:
            commands = {int(k): ControlCommand(float(t), float(s)) for k, (t, s) in rec["commands"].items()}
            world, _ = step_world(world, commands)
        except (KeyError, TypeError, ValueError, PlatoonError) as exc:
            divergence = Divergence(int(rec.get("step", checked + 1)), (f"re-simulation failed: {exc}",))
            break
        checked += 1
        found = _compare(rec["step"], rec["vehicles"], [v.to_dict() for v in world.vehicles])
        if world.step_index != rec["step"]:
            found = Divergence(rec["step"], ("step",) + (found.fields if found else ()))
        if found is not None:
            divergence = found
            break

    report = ReplayReport(checked, divergence)
    if emit_series is not None:
        out = Path(emit_series)
        out.mkdir(parents=True, exist_ok=True)
        report.series = headway_series(steps)
        report.series.to_csv(out / "series.csv", index=False)
        report.outputs = [out / "series.csv", plot_series(report.series, out / "series.html")]
    return report


def parse_seeds(text: str) -> list[int]:
    """`a..b` (inclusive) or a comma-separated list."""
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = (int(x) for x in text.split("..", 1))
            if hi < lo:
                raise ValueError("empty range")
            return list(range(lo, hi + 1))
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad seed list {text!r}: {exc}", "seeds") from exc
