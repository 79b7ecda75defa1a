"""Per-episode metrics derived from trace records, and the aggregated report."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Any, Iterable, Sequence

import numpy as np
import pandas as pd

OUTCOMES = ("pass", "collision", "safe_halt", "timeout", "failed")

REPORT_COLUMNS = [
    "seed", "scenario", "outcome", "avg_speed", "avg_hwd", "collision", "passed", "safe_halt",
    "substitutions", "lqr_fraction", "steps", "total_reward", "error",
]


@dataclass(frozen=True)
class MetricsRow:
    seed: int
    scenario: str
    outcome: str
    avg_speed: float
    avg_hwd: float
    collision: bool
    passed: bool
    safe_halt: bool
    substitutions: int
    lqr_fraction: float
    steps: int
    total_reward: float
    error: str = ""

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def failed(cls, seed: int, scenario: str, error: str) -> "MetricsRow":
        nan = float("nan")
        return cls(seed, scenario, "failed", nan, nan, False, False, False, 0, nan, 0, nan, error)


def _headways(platoon: Sequence[dict]) -> list[float]:
    ordered = sorted(platoon, key=lambda v: (-v["s"], v["id"]))
    return [
        (a["s"] - b["s"]) - 0.5 * (a["length"] + b["length"])
        for a, b in zip(ordered, ordered[1:])
    ]


def metrics_from_trace(
    steps: Sequence[dict], seed: int, scenario: str, zone_end: float, halt_speed: float = 0.5
) -> MetricsRow:
    """Recompute an episode's metrics from its step records alone."""
    if not steps:
        return MetricsRow.failed(seed, scenario, "empty trace")
    speeds, hwds = [], []
    collision = halted = False
    substitutions = lqr_steps = 0
    total_reward = 0.0
    for rec in steps:
        platoon = [v for v in rec["vehicles"] if v["in_platoon"]]
        speeds.extend(v["v"] for v in platoon)
        gaps = _headways(platoon)
        if gaps:
            hwds.append(float(np.mean(gaps)))
        collision |= any(v["crashed"] for v in platoon)
        halted |= any(v["v"] < halt_speed for v in platoon)
        substitutions += int(rec.get("substitutions", 0))
        lqr_steps += rec.get("fsm") == "S1_LQR"
        total_reward += rec["reward"]["R_global"]

    final = [v for v in steps[-1]["vehicles"] if v["in_platoon"]]
    passed = not collision and all(v["s"] >= zone_end for v in final)
    safe_halt = not collision and not passed and halted
    if collision:
        outcome = "collision"
    elif passed:
        outcome = "pass"
    elif safe_halt:
        outcome = "safe_halt"
    else:
        outcome = "timeout"
    return MetricsRow(
        seed=seed,
        scenario=scenario,
        outcome=outcome,
        avg_speed=float(np.mean(speeds)),
        avg_hwd=float(np.mean(hwds)) if hwds else math.nan,
        collision=collision,
        passed=passed,
        safe_halt=safe_halt,
        substitutions=substitutions,
        lqr_fraction=lqr_steps / len(steps),
        steps=len(steps),
        total_reward=total_reward,
    )


class MetricsReport:
    """Per-episode rows in seed order plus their aggregate."""

    def __init__(self, rows: Iterable[MetricsRow]):
        rows = sorted(rows, key=lambda r: r.seed)
        self.frame = pd.DataFrame([r.to_dict() for r in rows], columns=REPORT_COLUMNS)

    @property
    def failed(self) -> int:
        """Rows whose episode raised. Their metrics are NaN, so `aggregate` averages the
        remaining rows and reports this count alongside instead of folding them in."""
        return int((self.frame["outcome"] == "failed").sum())

    def aggregate(self) -> dict[str, float]:
        """Arithmetic mean of every completed row; `episodes` counts those rows only."""
        ok = self.frame[self.frame["outcome"] != "failed"]
        if ok.empty:
            return {"episodes": 0, "failed": self.failed}
        return {
            "episodes": int(len(ok)),
            "failed": self.failed,
            "avg_speed": float(ok["avg_speed"].mean()),
            "avg_hwd": float(ok["avg_hwd"].mean()),
            "collision_rate": float(ok["collision"].astype(float).mean()),
            "pass_rate": float(ok["passed"].astype(float).mean()),
            "safe_halt_rate": float(ok["safe_halt"].astype(float).mean()),
            "substitutions": float(ok["substitutions"].mean()),
            "lqr_fraction": float(ok["lqr_fraction"].mean()),
        }

    def to_csv(self, path) -> None:
        self.frame.to_csv(path, index=False)
