"""Training for the exportable classifiers.

Exports never depend on trained accuracy; this exists so users with the
benchmark data on disk can reproduce verdict distributions closer to those
of trained networks.
"""

from __future__ import annotations

import argparse

import numpy as np
import torch
from torch import nn

from .datasets import DATASETS, load_graph_dataset
from .sage import GraphClassifier


def train_graph_classifier(
    records,
    num_features: int,
    num_classes: int,
    epochs: int = 200,
    lr: float = 0.01,
    weight_decay: float = 1e-4,
    dropout: float = 0.5,
    train_fraction: float = 0.3,
    seed: int = 0,
) -> GraphClassifier:
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    module = GraphClassifier(num_features, num_classes, dropout=dropout)
    order = rng.permutation(len(records))
    train_ids = order[: max(1, int(train_fraction * len(records)))]
    tensors = [
        (
            torch.tensor(records[i].features, dtype=torch.float32),
            torch.tensor(records[i].adjacency, dtype=torch.float32),
            torch.tensor(records[i].label),
        )
        for i in train_ids
    ]
    optimizer = torch.optim.Adam(module.parameters(), lr=lr, weight_decay=weight_decay)
    loss_fn = nn.CrossEntropyLoss()
    module.train()
    for _ in range(epochs):
        optimizer.zero_grad()
        loss = torch.stack(
            [loss_fn(module(x, adj)[None, :], y[None]) for x, adj, y in tensors]
        ).mean()
        loss.backward()
        optimizer.step()
    module.eval()
    return module


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Train an exportable graph classifier")
    parser.add_argument("--dataset", required=True, choices=["mutag", "enzymes"])
    parser.add_argument("--root", default="data")
    parser.add_argument("--out", required=True, help="Where to write the state dict (.pt)")
    parser.add_argument("--epochs", type=int, default=200)
    parser.add_argument("--lr", type=float, default=0.01)
    parser.add_argument("--weight-decay", type=float, default=1e-4)
    parser.add_argument("--dropout", type=float, default=0.5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    info = DATASETS[args.dataset]
    records = load_graph_dataset(args.dataset, args.root)
    module = train_graph_classifier(
        records, info.num_features, info.num_classes, epochs=args.epochs,
        lr=args.lr, weight_decay=args.weight_decay, dropout=args.dropout,
        seed=args.seed,
    )
    torch.save(module.state_dict(), args.out)
    print(f"saved {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
