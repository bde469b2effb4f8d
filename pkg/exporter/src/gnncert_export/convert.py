"""Maps the torch modules onto the verifier's model JSON schema."""

from __future__ import annotations

import numpy as np
import torch

from .sage import SUM_AGGRS, GraphClassifier, NodeClassifier, SumSAGEConv


class ExportError(Exception):
    pass


class UnsupportedAggregation(ExportError):
    """Only unnormalized sum aggregation is representable."""


def _conv_layer_dict(conv: SumSAGEConv, activation: str) -> dict:
    if conv.aggr not in SUM_AGGRS:
        raise UnsupportedAggregation(
            f"aggregation {conv.aggr!r} cannot be expressed; retrain with sum aggregation"
        )
    # torch Linear stores (out, in); the schema wants d_in x d_out
    return {
        "w_self": conv.lin_r.weight.detach().numpy().T.tolist(),
        "w_neigh": conv.lin_l.weight.detach().numpy().T.tolist(),
        "bias": conv.lin_l.bias.detach().numpy().tolist(),
        "activation": activation,
    }


def _dense_layer_dict(linear: torch.nn.Linear, activation: str = "identity") -> dict:
    weight = linear.weight.detach().numpy().T
    return {
        "w_self": weight.tolist(),
        "w_neigh": np.zeros_like(weight).tolist(),
        "bias": linear.bias.detach().numpy().tolist(),
        "activation": activation,
    }


def export_model(module: torch.nn.Module) -> dict:
    """Model JSON for a trained classifier; forward parity is exact up to
    float32 -> float64 rounding."""
    if isinstance(module, GraphClassifier):
        layers = [
            _conv_layer_dict(conv, "relu") for conv in module.convs
        ]
        return {
            "layers": layers,
            "pooling": "add",
            "dense": [_dense_layer_dict(module.head)],
        }
    if isinstance(module, NodeClassifier):
        return {
            "layers": [
                _conv_layer_dict(module.conv1, "relu"),
                _conv_layer_dict(module.conv2, "identity"),
            ],
            "pooling": "none",
            "dense": [],
        }
    raise ExportError(f"cannot export module of type {type(module).__name__}")
