import numpy as np
import pytest
import torch


@pytest.fixture(autouse=True)
def _seed_torch():
    torch.manual_seed(1234)


@pytest.fixture
def synthetic_tu(tmp_path):
    """Three tiny graphs in the raw TUDataset text layout.

    Graph 1: triangle, node labels (7, 8, 7), label  1
    Graph 2: single edge, node labels (8, 8),   label -1
    Graph 3: path of 3,   node labels (7, 7, 8), label 1
    """
    d = tmp_path / "SYN"
    d.mkdir()
    edges = [
        (1, 2), (2, 1), (1, 3), (3, 1), (2, 3), (3, 2),  # triangle
        (4, 5), (5, 4),                                   # edge
        (6, 7), (7, 6), (7, 8), (8, 7),                   # path
    ]
    (d / "SYN_A.txt").write_text("\n".join(f"{u}, {v}" for u, v in edges) + "\n")
    (d / "SYN_graph_indicator.txt").write_text("\n".join("11122333") + "\n")
    (d / "SYN_graph_labels.txt").write_text("1\n-1\n1\n")
    (d / "SYN_node_labels.txt").write_text("\n".join("78877778") + "\n")
    return d


def random_inputs(rng, n, d):
    feats = rng.normal(size=(n, d))
    adj = (rng.random((n, n)) < 0.5).astype(float)
    np.fill_diagonal(adj, 0.0)
    adj = np.maximum(adj, adj.T)
    return feats, adj
