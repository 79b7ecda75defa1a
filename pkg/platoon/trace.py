"""
Line-delimited JSON traces.

Layout: one `header` line (schema, scenario spec, seed, policy), one `step` line per
simulation step, one `summary` line with the metrics row.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable

from .errors import ReplayError

SCHEMA_VERSION = 1


def _line(kind: str, payload: dict[str, Any]) -> str:
    return json.dumps({"kind": kind, **payload}, separators=(",", ":"), allow_nan=True)


def write_trace(path: str | Path, header: dict[str, Any], steps: Iterable[dict[str, Any]], summary: dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(_line("header", {"schema_version": SCHEMA_VERSION, **header}) + "\n")
        for rec in steps:
            fh.write(_line("step", rec) + "\n")
        fh.write(_line("summary", summary) + "\n")
    return path


def read_trace(path: str | Path) -> tuple[dict[str, Any], list[dict[str, Any]], dict[str, Any] | None]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ReplayError(f"cannot read trace {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise ReplayError(f"{path}: not UTF-8 text at byte {exc.start}") from exc
    header, steps, summary = None, [], None
    for n, raw in enumerate(lines, 1):
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
        except ValueError as exc:
            raise ReplayError(f"{path}:{n}: invalid JSON ({exc})") from exc
        if not isinstance(rec, dict):
            raise ReplayError(f"{path}:{n}: expected a JSON object")
        kind = rec.pop("kind", None)
        if kind == "header":
            header = rec
        elif kind == "step":
            steps.append(rec)
        elif kind == "summary":
            summary = rec
        else:
            raise ReplayError(f"{path}:{n}: unknown record kind {kind!r}")
    if header is None:
        raise ReplayError(f"{path}: missing header line")
    if header.get("schema_version") != SCHEMA_VERSION:
        raise ReplayError(f"{path}: unsupported schema_version {header.get('schema_version')!r}")
    return header, steps, summary
