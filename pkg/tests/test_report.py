import json
import math
from pathlib import Path

import numpy as np
import pytest

from gnncert import BenchRecord, bench, sgm, summarize
from gnncert.errors import EmptyInput, InconsistentInput
from gnncert.report import budget_from_fraction, spec_from_fraction

from conftest import path3_graph_model, path3_instance


def test_sgm_zeros_is_zero():
    assert sgm([0.0, 0.0], 10.0) == pytest.approx(0.0, abs=1e-9)


def test_sgm_single_element_identity():
    for t in (0.0, 1.5, 123.0):
        assert sgm([t], 10.0) == pytest.approx(t, abs=1e-9)
        assert sgm([t], 3.0) == pytest.approx(t, abs=1e-9)


def test_sgm_two_values_log_domain():
    # sqrt(20 * 50) - 10 = sqrt(1000) - 10
    assert sgm([10.0, 40.0], 10.0) == pytest.approx(math.sqrt(1000.0) - 10.0, abs=1e-9)


def test_sgm_errors():
    with pytest.raises(EmptyInput):
        sgm([], 10.0)
    with pytest.raises(InconsistentInput):
        sgm([1.0], 0.0)
    with pytest.raises(InconsistentInput):
        sgm([-1.0], 10.0)


def _record(status, t, rid="x"):
    return BenchRecord(instance_id=rid, delta=None, status=status, time_seconds=t,
                       nodes_explored=1, strategy="sbt")


def test_summarize_recomputation_oracle():
    rows = [
        _record("robust", 10.0, "a"),
        _record("nonrobust", 40.0, "b"),
        _record("timeout", 5.0, "c"),
    ]
    summary = summarize(rows)
    assert summary.count == 3
    assert summary.solved_count == 2
    # independent recomputation from the raw rows
    times = [10.0, 40.0, 5.0]
    assert summary.avg_time == pytest.approx(sum(times) / 3)
    prod = 1.0
    for t in times:
        prod *= t + 10.0
    assert summary.sgm_time == pytest.approx(prod ** (1.0 / 3.0) - 10.0, abs=1e-9)
    assert summary.robust.count == 1
    assert summary.robust.avg_time == pytest.approx(10.0)


def test_budget_from_fraction():
    instance = path3_instance()  # 4 nonzero entries
    assert budget_from_fraction(instance, 10.0) == 1  # ceil(0.4)
    assert budget_from_fraction(instance, 100.0) == 4
    spec = spec_from_fraction(instance, 10.0, strength=2)
    assert spec.mode == "p1"
    assert spec.local_budgets == (1, 2, 1)


def _write_fixture_files(tmp_path, head_bias=7.0):
    model = path3_graph_model(head_bias)
    instance = path3_instance()
    (tmp_path / "model.json").write_text(json.dumps(model.to_dict()))
    (tmp_path / "graph.json").write_text(json.dumps(instance.to_dict()))
    (tmp_path / "spec.json").write_text(
        json.dumps({"mode": "p1", "global_budget": 1, "local_budgets": [1, 1, 1]})
    )


def test_bench_runs_manifest_and_streams_records(tmp_path):
    _write_fixture_files(tmp_path)
    manifest = {
        "strategy": "sbt",
        "seed": 0,
        "instances": [
            {"id": "a", "model": "model.json", "graph": "graph.json", "spec": "spec.json"},
            {"id": "b", "model": "model.json", "graph": "graph.json", "spec": "spec.json"},
        ],
    }
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    records = tmp_path / "records.jsonl"
    summary_path = tmp_path / "summary.json"
    summary = bench(tmp_path / "manifest.json", records, summary_path)
    assert summary.count == 2 and summary.solved_count == 2
    assert summary.robust.count == 2
    rows = [json.loads(line) for line in records.read_text().splitlines()]
    assert [r["instance_id"] for r in rows] == ["a", "b"]
    assert all(r["status"] == "robust" for r in rows)
    stored = json.loads(summary_path.read_text())
    assert stored["count"] == 2
    # summary agrees with a recomputation from the streamed records
    assert stored["avg_time"] == pytest.approx(
        sum(r["time_seconds"] for r in rows) / 2
    )


def test_bench_records_timeout_and_errors(tmp_path):
    _write_fixture_files(tmp_path)
    manifest = {
        "strategy": "basic",
        "node_limit": 1,
        "instances": [
            {"id": "slow", "model": "model.json", "graph": "graph.json", "spec": "spec.json"},
            {"id": "broken", "model": "missing.json", "graph": "graph.json",
             "spec": "spec.json"},
        ],
    }
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    records = tmp_path / "records.jsonl"
    summary = bench(tmp_path / "manifest.json", records)
    rows = [json.loads(line) for line in records.read_text().splitlines()]
    assert len(rows) == 2
    assert rows[0]["status"] == "timeout"
    assert "error" in rows[1]
    # timeouts are excluded from solved, errors from the summary entirely
    assert summary.count == 1 and summary.solved_count == 0


def test_bench_deltas_expand_instances(tmp_path):
    _write_fixture_files(tmp_path)
    manifest = {
        "strategy": "sbt",
        "deltas": [25, 50],
        "local_strength": 2,
        "instances": [{"id": "a", "model": "model.json", "graph": "graph.json"}],
    }
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    records = tmp_path / "records.jsonl"
    summary = bench(tmp_path / "manifest.json", records)
    rows = [json.loads(line) for line in records.read_text().splitlines()]
    assert summary.count == 2
    assert sorted(r["delta"] for r in rows) == [25.0, 50.0]
