"""Batch benchmark harness and aggregate statistics.

A manifest lists (model, graph) instances; each either carries an explicit
perturbation spec or is run over a range of budget fractions, with the
global budget derived from the edge count and local budgets from the degree
rule.  Records stream to JSONL as they complete, so a crashed batch keeps
its partial results.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .bnb import STATUS_TIMEOUT, SearchConfig, verify
from .errors import EmptyInput, InconsistentInput
from .model import GraphInstance, load_instance, load_model
from .perturbation import (
    MODE_P1,
    MODE_P2,
    PerturbationSpec,
    load_spec,
    local_budget_from_degree,
)

SGM_SHIFT = 10.0


def sgm(times, shift: float = SGM_SHIFT) -> float:
    """Shifted geometric mean: (prod(t_i + s))^(1/n) - s, in log domain."""
    arr = np.asarray(list(times), dtype=np.float64)
    if arr.size == 0:
        raise EmptyInput("shifted geometric mean of an empty sequence")
    if shift <= 0:
        raise InconsistentInput("shift must be positive")
    if np.any(arr < 0):
        raise InconsistentInput("times must be nonnegative")
    return float(np.exp(np.mean(np.log(arr + shift))) - shift)


@dataclass(frozen=True)
class BenchRecord:
    instance_id: str
    delta: Optional[float]
    status: str
    time_seconds: float
    nodes_explored: int
    strategy: str

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class BenchSummary:
    count: int
    avg_time: Optional[float]
    sgm_time: Optional[float]
    solved_count: int
    robust: Optional["BenchSummary"] = None

    def to_dict(self) -> dict:
        out = {
            "count": self.count,
            "avg_time": self.avg_time,
            "sgm_time": self.sgm_time,
            "solved_count": self.solved_count,
        }
        if self.robust is not None:
            out["robust"] = self.robust.to_dict()
        return out


def summarize(records: Iterable[BenchRecord]) -> BenchSummary:
    recs = list(records)

    def stats(rows) -> tuple[int, Optional[float], Optional[float], int]:
        if not rows:
            return 0, None, None, 0
        times = [r.time_seconds for r in rows]
        solved = sum(1 for r in rows if r.status != STATUS_TIMEOUT)
        return len(rows), float(np.mean(times)), sgm(times), solved

    count, avg, geo, solved = stats(recs)
    r_rows = [r for r in recs if r.status == "robust"]
    r_count, r_avg, r_geo, r_solved = stats(r_rows)
    return BenchSummary(
        count=count,
        avg_time=avg,
        sgm_time=geo,
        solved_count=solved,
        robust=BenchSummary(r_count, r_avg, r_geo, r_solved),
    )


def budget_from_fraction(instance: GraphInstance, delta: float) -> int:
    """Global budget ceil(delta% of the nonzero adjacency entries)."""
    edges = int(np.count_nonzero(instance.adjacency))
    return int(math.ceil(delta / 100.0 * edges))


def spec_from_fraction(instance: GraphInstance, delta: float, strength: int) -> PerturbationSpec:
    mode = MODE_P2 if instance.directed else MODE_P1
    q = local_budget_from_degree(instance.degrees(), strength)
    return PerturbationSpec(
        mode=mode,
        global_budget=budget_from_fraction(instance, delta),
        local_budgets=tuple(int(x) for x in q),
    )


def _run_entry(task: dict) -> dict:
    """One (instance, budget) verification; returns a record or error dict."""
    try:
        model = load_model(task["model"])
        instance = load_instance(task["graph"])
        if task.get("spec"):
            spec = load_spec(task["spec"], instance)
        else:
            spec = spec_from_fraction(instance, task["delta"], task.get("strength", 2))
        config = SearchConfig(**task["config"])
        verdict = verify(model, instance, spec, config)
        return BenchRecord(
            instance_id=task["id"],
            delta=task.get("delta"),
            status=verdict.status,
            time_seconds=verdict.time_seconds,
            nodes_explored=verdict.nodes_explored,
            strategy=verdict.strategy,
        ).to_dict()
    except Exception as exc:  # recorded, never aborts the batch
        return {"instance_id": task["id"], "delta": task.get("delta"), "error": str(exc)}


def _manifest_tasks(manifest: dict, manifest_dir: Path) -> list[dict]:
    config = {
        "strategy": manifest.get("strategy", "abt"),
        "time_limit": manifest.get("time_limit", 3600.0),
        "node_limit": manifest.get("node_limit", 1_000_000_000),
        "branching": manifest.get("branching", "max_impact"),
        "node_selection": manifest.get("node_selection", "best_bound"),
        "seed": manifest.get("seed", 0),
    }
    deltas = manifest.get("deltas")
    strength = manifest.get("local_strength", 2)
    tasks = []
    for entry in manifest["instances"]:
        resolved = {
            "id": str(entry["id"]),
            "model": str(manifest_dir / entry["model"]),
            "graph": str(manifest_dir / entry["graph"]),
            "spec": str(manifest_dir / entry["spec"]) if entry.get("spec") else None,
            "config": config,
            "strength": strength,
        }
        if resolved["spec"] is None:
            if not deltas:
                raise InconsistentInput(
                    f"instance {entry['id']} has no spec and the manifest has no deltas"
                )
            for delta in deltas:
                tasks.append({**resolved, "delta": float(delta)})
        else:
            tasks.append(resolved)
    return tasks


def bench(
    manifest_path,
    records_path,
    summary_path=None,
    workers: Optional[int] = None,
) -> BenchSummary:
    """Run every manifest entry, streaming JSONL records as they finish."""
    manifest_path = Path(manifest_path)
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    tasks = _manifest_tasks(manifest, manifest_path.parent)
    if workers is None:
        workers = int(os.environ.get("GNNCERT_THREADS", "1"))
    records: list[BenchRecord] = []
    with open(records_path, "w", encoding="utf-8") as out:

        def consume(row: dict):
            out.write(json.dumps(row, sort_keys=True) + "\n")
            out.flush()
            if "error" not in row:
                records.append(BenchRecord(**row))

        if workers <= 1:
            for task in tasks:
                consume(_run_entry(task))
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(_run_entry, t) for t in tasks]
                for fut in as_completed(futures):
                    consume(fut.result())
    summary = summarize(records)
    if summary_path is not None:
        with open(summary_path, "w", encoding="utf-8") as fh:
            json.dump(summary.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return summary
