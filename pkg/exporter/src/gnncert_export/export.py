"""One-shot exporter: models and benchmark graphs into the verifier's JSON
formats, with budget generation and a manifest indexing every file."""

from __future__ import annotations

import argparse
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .convert import ExportError, export_model
from .datasets import (
    DATASETS,
    DatasetUnavailable,
    GraphRecord,
    load_graph_dataset,
    load_node_dataset,
)
from .sage import GraphClassifier, NodeClassifier

GRAPH_ARCH = {"layers": 3, "hidden": 16, "pooling": "add", "dense": 1}
NODE_ARCH = {"layers": 2, "hidden": 32}


@dataclass(frozen=True)
class ExportManifest:
    dataset: str
    task: str
    architecture: dict
    split_fraction: float
    training: dict
    count: int
    model_file: str
    files: list = field(default_factory=list)

    def __post_init__(self):
        expected = GRAPH_ARCH if self.task == "graph" else NODE_ARCH
        for key, value in expected.items():
            if self.architecture.get(key) != value:
                raise ExportError(
                    f"architecture field {key}={self.architecture.get(key)!r} "
                    f"does not match the {self.task}-task layout {expected}"
                )

    def to_dict(self) -> dict:
        return asdict(self)


def degree_local_budgets(adjacency: np.ndarray, strength: int) -> np.ndarray:
    degrees = adjacency.sum(axis=0).astype(int)
    if degrees.size == 0:
        return degrees
    return np.maximum(0, degrees - int(degrees.max()) + int(strength))


def khop_nodes(adjacency: np.ndarray, t: int, k: int) -> list[int]:
    """Nodes within k incoming hops of t (inclusive), sorted."""
    reached = {t}
    frontier = {t}
    for _ in range(k):
        nxt = set()
        for v in frontier:
            nxt.update(np.flatnonzero(adjacency[:, v] > 0.5).tolist())
        frontier = nxt - reached
        reached |= frontier
        if not frontier:
            break
    return sorted(reached)


def _edges_json(adjacency: np.ndarray, directed: bool) -> list[list[int]]:
    us, vs = np.nonzero(adjacency)
    if directed:
        return sorted([int(u), int(v)] for u, v in zip(us, vs))
    return sorted([int(u), int(v)] for u, v in zip(us, vs) if u < v)


def _graph_json(features, adjacency, directed, target, label_true, label_attack) -> dict:
    return {
        "n": int(features.shape[0]),
        "directed": bool(directed),
        "features": np.asarray(features, dtype=float).tolist(),
        "edges": _edges_json(adjacency, directed),
        "target": target,
        "label_true": int(label_true),
        "label_attack": int(label_attack),
    }


@torch.no_grad()
def _predict(module: torch.nn.Module, record: GraphRecord) -> np.ndarray:
    module.eval()
    out = module(
        torch.tensor(record.features, dtype=torch.float32),
        torch.tensor(record.adjacency, dtype=torch.float32),
    )
    return out.numpy()


def export_graph_records(
    records: list[GraphRecord],
    num_classes: int,
    module: GraphClassifier,
    out_dir,
    dataset_name: str = "dataset",
    delta: float = 1.0,
    strength: int = 2,
    split_fraction: float = 0.3,
    training: dict | None = None,
) -> dict:
    """Per-graph instance and spec files plus the exported model JSON."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model_dict = export_model(module)
    (out / "model.json").write_text(json.dumps(model_dict), encoding="utf-8")
    files = []
    for idx, rec in enumerate(records):
        label_true = int(np.argmax(_predict(module, rec)))
        label_attack = (label_true + 1) % num_classes
        graph = _graph_json(rec.features, rec.adjacency, rec.directed, "graph",
                            label_true, label_attack)
        edges = int(np.count_nonzero(rec.adjacency))
        spec = {
            "mode": "p1",
            "global_budget": int(math.ceil(delta / 100.0 * edges)),
            "local_budgets": degree_local_budgets(rec.adjacency, strength).tolist(),
        }
        g_path, s_path = f"graph_{idx:04d}.json", f"spec_{idx:04d}.json"
        (out / g_path).write_text(json.dumps(graph), encoding="utf-8")
        (out / s_path).write_text(json.dumps(spec), encoding="utf-8")
        files.append({"id": idx, "graph": g_path, "spec": s_path,
                      "dataset_label": int(rec.label)})
    manifest = ExportManifest(
        dataset=dataset_name,
        task="graph",
        architecture={**GRAPH_ARCH},
        split_fraction=split_fraction,
        training=training or {},
        count=len(files),
        model_file="model.json",
        files=files,
    )
    (out / "manifest.json").write_text(
        json.dumps(manifest.to_dict(), indent=2), encoding="utf-8"
    )
    return manifest.to_dict()


def export_node_records(
    record: GraphRecord,
    labels: np.ndarray,
    module: NodeClassifier,
    out_dir,
    dataset_name: str = "dataset",
    hops: int = 2,
    global_budget: int = 10,
    local_budget: int = 5,
    split_fraction: float = 0.1,
    training: dict | None = None,
    targets=None,
) -> dict:
    """One instance per target node over its k-hop incoming neighborhood."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model_dict = export_model(module)
    (out / "model.json").write_text(json.dumps(model_dict), encoding="utf-8")
    predictions = np.argmax(_predict(module, record), axis=1)
    num_classes = len(model_dict["layers"][-1]["bias"])
    files = []
    n = record.features.shape[0]
    for idx, t in enumerate(range(n) if targets is None else targets):
        nodes = khop_nodes(record.adjacency, t, hops)
        index = {old: new for new, old in enumerate(nodes)}
        sub_adj = record.adjacency[np.ix_(nodes, nodes)]
        label_true = int(predictions[t])
        label_attack = (label_true + 1) % num_classes
        graph = _graph_json(record.features[nodes], sub_adj, True,
                            {"node": index[t]}, label_true, label_attack)
        spec = {
            "mode": "p2",
            "global_budget": int(global_budget),
            "local_budgets": [int(local_budget)] * len(nodes),
        }
        g_path, s_path = f"node_{idx:05d}.json", f"spec_{idx:05d}.json"
        (out / g_path).write_text(json.dumps(graph), encoding="utf-8")
        (out / s_path).write_text(json.dumps(spec), encoding="utf-8")
        files.append({"id": idx, "target": int(t), "graph": g_path, "spec": s_path,
                      "dataset_label": int(labels[t])})
    manifest = ExportManifest(
        dataset=dataset_name,
        task="node",
        architecture={**NODE_ARCH},
        split_fraction=split_fraction,
        training=training or {},
        count=len(files),
        model_file="model.json",
        files=files,
    )
    (out / "manifest.json").write_text(
        json.dumps(manifest.to_dict(), indent=2), encoding="utf-8"
    )
    return manifest.to_dict()


def export_dataset(name: str, out_dir, root="data", checkpoint=None,
                   delta: float = 1.0, strength: int = 2, seed: int = 0) -> dict:
    """End-to-end export of a named benchmark.

    Raises ``DatasetUnavailable`` when the data is neither on disk nor
    fetchable.  Without a checkpoint, a freshly initialized model is
    exported (verdict distributions then differ from trained ones, but all
    schema and parity guarantees hold).
    """
    if name not in DATASETS:
        raise ExportError(f"unknown dataset {name!r}; choose from {sorted(DATASETS)}")
    info = DATASETS[name]
    torch.manual_seed(seed)
    if info.task == "graph":
        records = load_graph_dataset(name, root)
        module = GraphClassifier(info.num_features, info.num_classes)
        if checkpoint:
            module.load_state_dict(torch.load(checkpoint, weights_only=True))
        return export_graph_records(records, info.num_classes, module, out_dir,
                                    dataset_name=name, delta=delta, strength=strength)
    record, labels = load_node_dataset(name, root)
    module = NodeClassifier(info.num_features, info.num_classes)
    if checkpoint:
        module.load_state_dict(torch.load(checkpoint, weights_only=True))
    return export_node_records(record, labels, module, out_dir, dataset_name=name)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="Export a graph benchmark into gnncert JSON files"
    )
    parser.add_argument("--dataset", required=True, choices=sorted(DATASETS))
    parser.add_argument("--out", required=True)
    parser.add_argument("--root", default="data", help="Directory with raw dataset files")
    parser.add_argument("--checkpoint", default=None, help="Trained state dict (.pt)")
    parser.add_argument("--delta", type=float, default=1.0,
                        help="Global budget as a percentage of the edge count")
    parser.add_argument("--strength", type=int, default=2, help="Local attack strength")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    try:
        manifest = export_dataset(args.dataset, args.out, root=args.root,
                                  checkpoint=args.checkpoint, delta=args.delta,
                                  strength=args.strength, seed=args.seed)
    except DatasetUnavailable as exc:
        parser.exit(2, f"dataset unavailable: {exc}\n")
    print(f"exported {manifest['count']} instances to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
