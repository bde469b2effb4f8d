import json
import subprocess
import sys
from pathlib import Path

import pytest

from conftest import path3_graph_model, path3_instance, path3_spec
from lp_utils import parse_lp, solve_parsed_lp_by_enumeration


def run_cli(*args, cwd=None):
    return subprocess.run(
        [sys.executable, "-m", "gnncert.cli", *args],
        capture_output=True, text=True, cwd=cwd,
    )


@pytest.fixture()
def fixture_files(tmp_path):
    (tmp_path / "model.json").write_text(json.dumps(path3_graph_model(4.0).to_dict()))
    (tmp_path / "model_robust.json").write_text(json.dumps(path3_graph_model(7.0).to_dict()))
    (tmp_path / "graph.json").write_text(json.dumps(path3_instance().to_dict()))
    (tmp_path / "spec.json").write_text(json.dumps(path3_spec().to_dict()))
    return tmp_path


def common_args(d, model="model.json"):
    return ["--model", str(d / model), "--graph", str(d / "graph.json"),
            "--spec", str(d / "spec.json")]


def test_verify_exit_codes_and_report(fixture_files):
    d = fixture_files
    report = d / "report.json"
    proc = run_cli("verify", *common_args(d), "--strategy", "abt",
                   "--report", str(report))
    assert proc.returncode == 1, proc.stderr
    body = json.loads(report.read_text())
    assert body["status"] == "nonrobust"
    assert body["witness_edges"] == [[0, 1], [0, 2], [1, 2]]

    proc = run_cli("verify", *common_args(d, "model_robust.json"))
    assert proc.returncode == 0
    assert "status=robust" in proc.stdout

    proc = run_cli("verify", *common_args(d, "model_robust.json"),
                   "--strategy", "basic", "--node-limit", "1")
    assert proc.returncode == 2


def test_verify_reports_are_reproducible(fixture_files):
    d = fixture_files
    r1, r2 = d / "r1.json", d / "r2.json"
    args = common_args(d, "model_robust.json") + ["--seed", "7"]
    run_cli("verify", *args, "--no-timing", "--report", str(r1))
    run_cli("verify", *args, "--no-timing", "--report", str(r2))
    assert r1.read_bytes() == r2.read_bytes()
    # with timing on, the wall clock is the only field allowed to move
    t1, t2 = d / "t1.json", d / "t2.json"
    run_cli("verify", *args, "--report", str(t1))
    run_cli("verify", *args, "--report", str(t2))
    b1, b2 = json.loads(t1.read_text()), json.loads(t2.read_text())
    b1.pop("time_seconds"), b2.pop("time_seconds")
    assert b1 == b2


def test_bounds_outputs_records(fixture_files):
    d = fixture_files
    proc = run_cli("bounds", *common_args(d), "--strategy", "sbt")
    assert proc.returncode == 0, proc.stderr
    rows = [json.loads(line) for line in proc.stdout.splitlines()]
    rec = next(r for r in rows if r["layer"] == 1 and r["node"] == 0 and r["feature"] == 0)
    assert rec["pre"] == [-1.0, 2.0]
    assert rec["post"] == [0.0, 2.0]
    assert "margin_interval" in proc.stderr


def test_export_mip_and_verify_agree_on_hand_solved_file(fixture_files):
    d = fixture_files
    out = d / "problem.lp"
    proc = run_cli("export-mip", *common_args(d), "--strategy", "sbt", "--out", str(out))
    assert proc.returncode == 0, proc.stderr
    parsed = parse_lp(out.read_text())
    optimum = solve_parsed_lp_by_enumeration(parsed)
    assert optimum == pytest.approx(-2.0, abs=1e-7)
    verify_proc = run_cli("verify", *common_args(d))
    assert verify_proc.returncode == 1  # negative optimum <=> nonrobust

    # the robust variant flips both answers together
    out2 = d / "problem_robust.lp"
    run_cli("export-mip", *common_args(d, "model_robust.json"), "--out", str(out2))
    optimum2 = solve_parsed_lp_by_enumeration(parse_lp(out2.read_text()))
    assert optimum2 == pytest.approx(1.0, abs=1e-7)
    assert run_cli("verify", *common_args(d, "model_robust.json")).returncode == 0


def test_export_mip_byte_stable(fixture_files):
    d = fixture_files
    out1, out2 = d / "a.lp", d / "b.lp"
    run_cli("export-mip", *common_args(d), "--out", str(out1))
    run_cli("export-mip", *common_args(d), "--out", str(out2))
    assert out1.read_bytes() == out2.read_bytes()


def test_oracle_and_attack_commands(fixture_files):
    d = fixture_files
    proc = run_cli("oracle", *common_args(d))
    assert proc.returncode == 0
    body = json.loads(proc.stdout)
    assert body["min_margin"] == pytest.approx(-2.0)
    assert body["witness_edges"] == [[0, 1], [0, 2], [1, 2]]

    proc = run_cli("attack", *common_args(d), "--restarts", "1")
    body = json.loads(proc.stdout)
    assert body["found"] is True and body["margin"] < 0

    proc = run_cli("attack", *common_args(d, "model_robust.json"))
    body = json.loads(proc.stdout)
    assert body["found"] is False


def test_bench_command(fixture_files):
    d = fixture_files
    manifest = {
        "strategy": "sbt",
        "instances": [
            {"id": "a", "model": "model_robust.json", "graph": "graph.json",
             "spec": "spec.json"},
            {"id": "b", "model": "model.json", "graph": "graph.json", "spec": "spec.json"},
        ],
    }
    (d / "manifest.json").write_text(json.dumps(manifest))
    proc = run_cli("bench", "--manifest", str(d / "manifest.json"),
                   "--records", str(d / "records.jsonl"),
                   "--summary", str(d / "summary.json"))
    assert proc.returncode == 0, proc.stderr
    rows = [json.loads(line) for line in (d / "records.jsonl").read_text().splitlines()]
    assert {r["instance_id"]: r["status"] for r in rows} == {"a": "robust", "b": "nonrobust"}
    summary = json.loads((d / "summary.json").read_text())
    assert summary["count"] == 2 and summary["solved_count"] == 2
    assert summary["robust"]["count"] == 1


def test_cli_error_exit_codes(fixture_files):
    d = fixture_files
    # inconsistent input: spec length mismatch -> gnncert error (exit 4)
    (d / "bad_spec.json").write_text(
        json.dumps({"mode": "p1", "global_budget": 1, "local_budgets": [1, 1]})
    )
    proc = run_cli("verify", "--model", str(d / "model.json"),
                   "--graph", str(d / "graph.json"), "--spec", str(d / "bad_spec.json"))
    assert proc.returncode == 4
    # usage error (missing required option) -> exit 3
    proc = run_cli("verify", "--graph", str(d / "graph.json"))
    assert proc.returncode == 3
