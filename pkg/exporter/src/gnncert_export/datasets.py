"""Benchmark loading: raw TUDataset text files, with an optional
torch_geometric fallback for datasets it can fetch."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .convert import ExportError


class DatasetUnavailable(ExportError):
    """The requested benchmark is not present locally and cannot be fetched."""


@dataclass(frozen=True)
class GraphRecord:
    """One graph: dense features, dense binary adjacency, class label."""

    features: np.ndarray
    adjacency: np.ndarray
    label: int
    directed: bool = False


@dataclass(frozen=True)
class DatasetInfo:
    tu_name: str
    task: str  # "graph" or "node"
    num_features: int
    num_classes: int
    num_graphs: int


DATASETS = {
    "mutag": DatasetInfo("MUTAG", "graph", 7, 2, 188),
    "enzymes": DatasetInfo("ENZYMES", "graph", 3, 6, 600),
    "cora": DatasetInfo("Cora", "node", 1433, 7, 1),
    "citeseer": DatasetInfo("CiteSeer", "node", 3703, 6, 1),
}


def _find_tu_dir(root: Path, tu_name: str) -> Path | None:
    for candidate in (root / tu_name, root / tu_name / "raw", root):
        if (candidate / f"{tu_name}_A.txt").exists():
            return candidate
    return None


def load_tu_records(directory: Path, tu_name: str) -> list[GraphRecord]:
    """Parse the standard TUDataset text files into per-graph records.

    Node features are the one-hot encoding of the node labels; graph labels
    are remapped to 0..C-1 in sorted order.
    """
    directory = Path(directory)

    def rows(name, dtype=int):
        path = directory / f"{tu_name}_{name}.txt"
        if not path.exists():
            raise DatasetUnavailable(f"missing {path}")
        out = []
        for line in path.read_text().splitlines():
            line = line.strip()
            if line:
                out.append([dtype(tok) for tok in line.replace(",", " ").split()])
        return out

    edges = rows("A")
    graph_of_node = [r[0] for r in rows("graph_indicator")]
    graph_labels_raw = [r[0] for r in rows("graph_labels")]
    node_labels = [r[0] for r in rows("node_labels")]

    label_index = {lab: i for i, lab in enumerate(sorted(set(graph_labels_raw)))}
    feat_index = {lab: i for i, lab in enumerate(sorted(set(node_labels)))}
    num_feats = len(feat_index)

    graphs = sorted(set(graph_of_node))
    nodes_of = {g: [] for g in graphs}
    for node_id, g in enumerate(graph_of_node, start=1):
        nodes_of[g].append(node_id)

    records = []
    for g in graphs:
        nodes = nodes_of[g]
        local = {n: i for i, n in enumerate(nodes)}
        n = len(nodes)
        feats = np.zeros((n, num_feats))
        for node_id in nodes:
            feats[local[node_id], feat_index[node_labels[node_id - 1]]] = 1.0
        adj = np.zeros((n, n))
        for u, v in edges:
            if u in local and v in local and u != v:
                adj[local[u], local[v]] = 1.0
        adj = np.maximum(adj, adj.T)  # the raw files list both directions; be safe
        records.append(
            GraphRecord(features=feats, adjacency=adj,
                        label=label_index[graph_labels_raw[g - 1]], directed=False)
        )
    return records


def _records_via_torch_geometric(name: str) -> list[GraphRecord]:
    info = DATASETS[name]
    try:
        from torch_geometric.datasets import TUDataset
    except ImportError as exc:
        raise DatasetUnavailable(
            f"{info.tu_name} is not present locally and torch_geometric is not installed"
        ) from exc
    try:
        dataset = TUDataset(root="data", name=info.tu_name)
    except Exception as exc:  # download failure
        raise DatasetUnavailable(f"could not fetch {info.tu_name}: {exc}") from exc
    records = []
    for data in dataset:
        n = int(data.num_nodes)
        adj = np.zeros((n, n))
        for u, v in data.edge_index.t().tolist():
            if u != v:
                adj[u, v] = 1.0
        adj = np.maximum(adj, adj.T)
        records.append(
            GraphRecord(features=data.x.numpy().astype(float), adjacency=adj,
                        label=int(data.y), directed=False)
        )
    return records


def load_graph_dataset(name: str, root="data") -> list[GraphRecord]:
    """Records for a graph-classification benchmark, local files first."""
    if name not in DATASETS or DATASETS[name].task != "graph":
        raise ExportError(f"unknown graph dataset {name!r}")
    info = DATASETS[name]
    tu_dir = _find_tu_dir(Path(root), info.tu_name)
    if tu_dir is not None:
        return load_tu_records(tu_dir, info.tu_name)
    return _records_via_torch_geometric(name)


def load_node_dataset(name: str, root="data") -> tuple[GraphRecord, np.ndarray]:
    """The single large graph of a node-classification benchmark plus its
    per-node label vector."""
    if name not in DATASETS or DATASETS[name].task != "node":
        raise ExportError(f"unknown node dataset {name!r}")
    info = DATASETS[name]
    try:
        from torch_geometric.datasets import Planetoid
    except ImportError as exc:
        raise DatasetUnavailable(
            f"{info.tu_name} needs torch_geometric (not installed)"
        ) from exc
    try:
        data = Planetoid(root=str(root), name=info.tu_name)[0]
    except Exception as exc:
        raise DatasetUnavailable(f"could not fetch {info.tu_name}: {exc}") from exc
    n = int(data.num_nodes)
    adj = np.zeros((n, n))
    for u, v in data.edge_index.t().tolist():
        if u != v:
            adj[u, v] = 1.0
    record = GraphRecord(features=data.x.numpy().astype(float), adjacency=adj,
                         label=-1, directed=True)
    return record, data.y.numpy().astype(int)
