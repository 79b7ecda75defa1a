"""
Tests for the platoon-sim command line: exit codes, printed summaries and written files.
"""
import json

import pytest

import platoon_sim
from platoon.config import dump_spec
from platoon.trace import read_trace, write_trace


@pytest.fixture
def config_file(small_spec, tmp_path):
    path = tmp_path / "unit.yaml"
    path.write_text(dump_spec(small_spec), encoding="utf-8")
    return path


def _summary(out: str) -> dict:
    line = [ln for ln in out.splitlines() if ln.startswith("{")][-1]
    return json.loads(line)


def test_eval_writes_report_and_summary(config_file, tmp_path, capsys):
    report = tmp_path / "out" / "report.csv"
    code = platoon_sim.main(["eval", "--config", str(config_file), "--seeds", "0..1", "--report", str(report)])
    out = capsys.readouterr().out
    assert code == 0
    assert "[eval] scenario=unit episodes=2" in out
    summary = _summary(out)
    assert summary["schema_version"] == 1
    assert summary["kind"] == "eval_summary"
    assert summary["episodes"] == 2
    assert report.is_file()


def test_eval_ablation_disables_projection(config_file, capsys):
    code = platoon_sim.main(["eval", "--config", str(config_file), "--seeds", "0", "--no-mask"])
    assert code == 0
    assert "mask=False" in capsys.readouterr().out


def test_config_errors_exit_with_one(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("twin:\n  horizn: 3\n", encoding="utf-8")
    assert platoon_sim.main(["eval", "--config", str(bad)]) == 1
    assert "twin.horizn" in capsys.readouterr().err
    assert platoon_sim.main(["eval", "--config", str(tmp_path / "absent.yaml")]) == 1


def test_bad_seed_list_exits_with_one(config_file):
    assert platoon_sim.main(["eval", "--config", str(config_file), "--seeds", "9..1"]) == 1


def test_replay_round(config_file, tmp_path, capsys):
    traces = tmp_path / "traces"
    assert platoon_sim.main(["eval", "--config", str(config_file), "--seeds", "0", "--trace-dir", str(traces)]) == 0
    trace = traces / "unit_seed0.jsonl"
    capsys.readouterr()

    assert platoon_sim.main(["replay", "--trace", str(trace)]) == 0
    assert "no divergence" in capsys.readouterr().out

    header, steps, summary = read_trace(trace)
    steps[0]["vehicles"][0]["s"] += 0.5
    tampered = write_trace(tmp_path / "tampered.jsonl", header, steps, summary)
    assert platoon_sim.main(["replay", "--trace", str(tampered)]) == 2
    assert "divergence at step 1" in capsys.readouterr().err


def test_replay_of_missing_trace_exits_with_one(tmp_path):
    assert platoon_sim.main(["replay", "--trace", str(tmp_path / "nope.jsonl")]) == 1


def test_subcommand_is_required():
    with pytest.raises(SystemExit):
        platoon_sim.main([])


def test_replay_of_binary_trace_exits_cleanly(tmp_path, capsys):
    trace = tmp_path / "binary.jsonl"
    trace.write_bytes(b"\xff\xfe")
    assert platoon_sim.main(["replay", "--trace", str(trace)]) == 1
    assert "not UTF-8" in capsys.readouterr().err
