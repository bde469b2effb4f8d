"""GraphSAGE-style modules with sum aggregation on dense adjacencies.

The convolution follows the usual two-branch layout: a neighbor branch
(``lin_l``, with bias) applied to the aggregated messages and a root branch
(``lin_r``, no bias) applied to the node itself.  Aggregation must be an
unnormalized sum so the verifier-side encoding stays linear in the
adjacency.
"""

from __future__ import annotations

import torch
from torch import nn

SUM_AGGRS = ("add", "sum")


class SumSAGEConv(nn.Module):
    """x'_v = lin_l( sum_{u: u->v} x_u ) + lin_r( x_v ) on a dense adjacency."""

    def __init__(self, in_channels: int, out_channels: int, aggr: str = "add"):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.aggr = aggr
        self.lin_l = nn.Linear(in_channels, out_channels, bias=True)
        self.lin_r = nn.Linear(in_channels, out_channels, bias=False)

    def forward(self, x: torch.Tensor, adj: torch.Tensor) -> torch.Tensor:
        if self.aggr not in SUM_AGGRS:
            raise ValueError(f"unsupported aggregation {self.aggr!r}")
        return self.lin_l(adj.t() @ x) + self.lin_r(x)


class GraphClassifier(nn.Module):
    """Three sum-SAGE layers, add pooling, one dense classification layer."""

    def __init__(self, in_channels: int, num_classes: int, hidden: int = 16,
                 num_layers: int = 3, dropout: float = 0.5, aggr: str = "add"):
        super().__init__()
        dims = [in_channels] + [hidden] * num_layers
        self.convs = nn.ModuleList(
            SumSAGEConv(dims[i], dims[i + 1], aggr) for i in range(num_layers)
        )
        self.dropout = nn.Dropout(dropout)
        self.head = nn.Linear(hidden, num_classes)

    def forward(self, x: torch.Tensor, adj: torch.Tensor) -> torch.Tensor:
        for conv in self.convs:
            x = torch.relu(conv(x, adj))
            x = self.dropout(x)
        pooled = x.sum(dim=0)
        return self.head(pooled)


class NodeClassifier(nn.Module):
    """Two sum-SAGE layers; the second produces the per-node logits."""

    def __init__(self, in_channels: int, num_classes: int, hidden: int = 32,
                 dropout: float = 0.5, aggr: str = "add"):
        super().__init__()
        self.conv1 = SumSAGEConv(in_channels, hidden, aggr)
        self.conv2 = SumSAGEConv(hidden, num_classes, aggr)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, adj: torch.Tensor) -> torch.Tensor:
        x = torch.relu(self.conv1(x, adj))
        x = self.dropout(x)
        return self.conv2(x, adj)
