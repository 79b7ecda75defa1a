#!/usr/bin/env python3
import os, sys, subprocess, webbrowser

HERE = os.path.dirname(os.path.abspath(__file__))
PY = sys.executable
OUT = os.path.join(HERE, "out", "demo")

def ensure_venv():
    venv = os.path.join(HERE, "venv")
    py = os.path.join(venv, "Scripts" if os.name=="nt" else "bin", "python")
    if not os.path.exists(py):
        print("[demo] creating venv …")
        subprocess.check_call([PY, "-m", "venv", "venv"], cwd=HERE)
    print("[demo] installing requirements …")
    subprocess.check_call([py, "-m", "pip", "install", "--upgrade", "pip"], cwd=HERE)
    subprocess.check_call([py, "-m", "pip", "install", "-r", "requirements.txt"], cwd=HERE)
    return py

def main():
    py = ensure_venv()
    traces = os.path.join(OUT, "traces")
    series = os.path.join(OUT, "series")

    eval_cmd = [py, "platoon_sim.py", "eval",
        "--config", "configs/traffic_accidents.yaml", "--seeds", "0..3", "--jobs", "2",
        "--report", os.path.join(OUT, "report.csv"), "--trace-dir", traces,
    ]
    replay_cmd = [py, "platoon_sim.py", "replay",
        "--trace", os.path.join(traces, "traffic_accidents_seed0.jsonl"), "--emit-series", series,
    ]

    print("[demo] evaluating 4 accident episodes …")
    code = subprocess.call(eval_cmd, cwd=HERE)
    if code == 1:
        sys.exit(code)

    print("[demo] replaying seed 0 …")
    subprocess.call(replay_cmd, cwd=HERE)

    html = os.path.join(series, "series.html")
    if os.path.exists(html):
        print(f"[demo] opening {html}")
        webbrowser.open("file://" + html)

if __name__ == "__main__":
    main()
