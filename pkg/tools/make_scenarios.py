"""
Expand the scenario presets into fully explicit YAML (every default spelled out)
under configs/full/, so a run can be pinned independent of future default changes.
Run once:
  python tools/make_scenarios.py
  python tools/make_scenarios.py --kinds          # also one default-road file per scenario kind
"""
from __future__ import annotations

import argparse
from pathlib import Path

from platoon.config import ScenarioSpec, dump_spec, load_spec
from platoon.scenarios import ScenarioKind

SRC = Path("configs")
OUTDIR = SRC / "full"


def write(name: str, spec: ScenarioSpec) -> None:
    fp = OUTDIR / f"{name}.yaml"
    header = f"# generated by tools/make_scenarios.py; config hash {spec.config_hash()}\n"
    fp.write_text(header + dump_spec(spec), encoding="utf-8")
    print("wrote", fp)


def main() -> None:
    ap = argparse.ArgumentParser(description="Write fully explicit scenario files.")
    ap.add_argument("--kinds", action="store_true", help="also write one default-road file per scenario kind")
    args = ap.parse_args()

    OUTDIR.mkdir(parents=True, exist_ok=True)
    for path in sorted(SRC.glob("*.yaml")):
        write(path.stem, load_spec(path))
    if args.kinds:
        for kind in ScenarioKind:
            write(f"default_{kind.value}", ScenarioSpec(name=f"default_{kind.value}").with_scenario(kind))


if __name__ == "__main__":
    main()
