"""Message-passing network definition, exact forward evaluation, and margins.

A network is a stack of message-passing layers followed by optional add
pooling and a dense head.  Layer ``l`` maps node states ``x_u`` to

    x_v <- act( w_self^T x_v  +  sum_u A[u, v] * w_neigh^T x_u  +  bias )

so the self contribution is carried by ``w_self`` and is never part of the
adjacency; adjacency diagonals are structurally zero.  Aggregation is an
unnormalized sum.  Dense head layers reuse the same layer record with
``w_neigh = 0`` and act on the pooled vector as a single-node graph.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, InconsistentInput, InvalidClass, NonBinaryAdjacency

RELU = "relu"
IDENTITY = "identity"

POOL_NONE = "none"
POOL_ADD = "add"


def _as_float_matrix(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InconsistentInput(f"{name} contains non-finite entries")
    return arr


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MPNNLayer:
    """One message-passing (or dense) layer.

    ``w_self`` and ``w_neigh`` are ``d_in x d_out``; ``bias`` has length
    ``d_out``.  ``activation`` is ``"relu"`` or ``"identity"``.
    """

    w_self: np.ndarray
    w_neigh: np.ndarray
    bias: np.ndarray
    activation: str = RELU

    def __post_init__(self):
        ws = _as_float_matrix(self.w_self, "w_self")
        wn = _as_float_matrix(self.w_neigh, "w_neigh")
        b = np.asarray(self.bias, dtype=np.float64)
        if b.ndim != 1:
            raise DimensionMismatch(f"bias must be 1-dimensional, got shape {b.shape}")
        if not np.all(np.isfinite(b)):
            raise InconsistentInput("bias contains non-finite entries")
        if ws.shape != wn.shape:
            raise DimensionMismatch(
                f"w_self shape {ws.shape} != w_neigh shape {wn.shape}"
            )
        if b.shape[0] != ws.shape[1]:
            raise DimensionMismatch(
                f"bias length {b.shape[0]} does not match output width {ws.shape[1]}"
            )
        if self.activation not in (RELU, IDENTITY):
            raise InconsistentInput(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "w_self", _freeze(ws))
        object.__setattr__(self, "w_neigh", _freeze(wn))
        object.__setattr__(self, "bias", _freeze(b))

    @property
    def d_in(self) -> int:
        return self.w_self.shape[0]

    @property
    def d_out(self) -> int:
        return self.w_self.shape[1]

    def apply_activation(self, pre: np.ndarray) -> np.ndarray:
        if self.activation == RELU:
            return np.maximum(pre, 0.0)
        return pre


@dataclass(frozen=True)
class MPNNModel:
    """A full network: message-passing layers, pooling, optional dense head."""

    mp_layers: tuple[MPNNLayer, ...]
    pooling: str = POOL_NONE
    dense: tuple[MPNNLayer, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "mp_layers", tuple(self.mp_layers))
        object.__setattr__(self, "dense", tuple(self.dense))
        if not self.mp_layers:
            raise InconsistentInput("model needs at least one message-passing layer")
        if self.pooling not in (POOL_NONE, POOL_ADD):
            raise InconsistentInput(f"unknown pooling {self.pooling!r}")
        chain = list(self.mp_layers) + list(self.dense)
        for prev, nxt in zip(chain, chain[1:]):
            if prev.d_out != nxt.d_in:
                raise DimensionMismatch(
                    f"layer widths do not chain: {prev.d_out} -> {nxt.d_in}"
                )
        for i, layer in enumerate(self.mp_layers[:-1]):
            if layer.activation != RELU:
                raise InconsistentInput(
                    f"message-passing layer {i} must use relu (only the last may be identity)"
                )
        for layer in self.dense:
            if np.any(layer.w_neigh != 0.0):
                raise InconsistentInput("dense head layers must have w_neigh = 0")
        if self.dense and self.pooling != POOL_ADD:
            raise InconsistentInput("a dense head requires add pooling")

    @property
    def d0(self) -> int:
        return self.mp_layers[0].d_in

    @property
    def dL(self) -> int:
        """Number of output classes."""
        chain = self.dense if self.dense else self.mp_layers
        return chain[-1].d_out

    @property
    def num_mp_layers(self) -> int:
        return len(self.mp_layers)

    def to_dict(self) -> dict:
        def layer_dict(layer: MPNNLayer) -> dict:
            return {
                "w_self": layer.w_self.tolist(),
                "w_neigh": layer.w_neigh.tolist(),
                "bias": layer.bias.tolist(),
                "activation": layer.activation,
            }

        return {
            "layers": [layer_dict(l) for l in self.mp_layers],
            "pooling": self.pooling,
            "dense": [layer_dict(l) for l in self.dense],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MPNNModel":
        def layer(entry: dict) -> MPNNLayer:
            return MPNNLayer(
                w_self=entry["w_self"],
                w_neigh=entry["w_neigh"],
                bias=entry["bias"],
                activation=entry.get("activation", RELU),
            )

        return cls(
            mp_layers=tuple(layer(e) for e in data["layers"]),
            pooling=data.get("pooling", POOL_NONE),
            dense=tuple(layer(e) for e in data.get("dense", [])),
        )


@dataclass(frozen=True)
class GraphInstance:
    """A concrete verification instance: graph, features, and the class pair.

    ``target_node`` is ``None`` for graph classification.  ``adjacency[u, v]``
    is the edge ``u -> v``; undirected instances store a symmetric matrix.
    """

    features: np.ndarray
    adjacency: np.ndarray
    directed: bool
    label_true: int
    label_attack: int
    target_node: Optional[int] = None

    def __post_init__(self):
        feats = _as_float_matrix(self.features, "features")
        adj = np.asarray(self.adjacency, dtype=np.float64)
        check_adjacency(adj, feats.shape[0])
        if not self.directed and not np.array_equal(adj, adj.T):
            raise InconsistentInput("undirected instance requires a symmetric adjacency")
        if self.target_node is not None and not (0 <= self.target_node < feats.shape[0]):
            raise InconsistentInput(f"target node {self.target_node} out of range")
        if self.label_true == self.label_attack:
            raise InvalidClass("label_true and label_attack must differ")
        if self.label_true < 0 or self.label_attack < 0:
            raise InvalidClass("labels must be nonnegative")
        object.__setattr__(self, "features", _freeze(feats))
        object.__setattr__(self, "adjacency", _freeze(adj))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def is_node_task(self) -> bool:
        return self.target_node is not None

    def in_neighbors(self, v: int) -> np.ndarray:
        """Nodes u with an edge u -> v in the base graph."""
        return np.flatnonzero(self.adjacency[:, v] > 0.5)

    def degrees(self) -> np.ndarray:
        """In-degree per node (equals the undirected degree when symmetric)."""
        return self.adjacency.sum(axis=0).astype(np.int64)

    def edge_list(self) -> list[tuple[int, int]]:
        """Edges as ordered pairs; one (u < v) entry per undirected edge."""
        us, vs = np.nonzero(self.adjacency)
        if self.directed:
            return sorted(zip(us.tolist(), vs.tolist()))
        return sorted({(min(u, v), max(u, v)) for u, v in zip(us.tolist(), vs.tolist())})

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "directed": self.directed,
            "features": self.features.tolist(),
            "edges": [[int(u), int(v)] for u, v in self.edge_list()],
            "target": {"node": int(self.target_node)} if self.is_node_task else "graph",
            "label_true": int(self.label_true),
            "label_attack": int(self.label_attack),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GraphInstance":
        n = int(data["n"])
        directed = bool(data["directed"])
        adj = np.zeros((n, n), dtype=np.float64)
        for u, v in data["edges"]:
            if not (0 <= u < n and 0 <= v < n):
                raise InconsistentInput(f"edge ({u}, {v}) out of range")
            if u == v:
                raise NonBinaryAdjacency("self-loops are not representable")
            adj[u, v] = 1.0
            if not directed:
                adj[v, u] = 1.0
        target = data["target"]
        if target == "graph":
            target_node = None
        elif isinstance(target, dict) and "node" in target:
            target_node = int(target["node"])
        else:
            raise InconsistentInput(f"unrecognized target {target!r}")
        return cls(
            features=data["features"],
            adjacency=adj,
            directed=directed,
            label_true=int(data["label_true"]),
            label_attack=int(data["label_attack"]),
            target_node=target_node,
        )


def check_adjacency(adjacency: np.ndarray, n: Optional[int] = None) -> None:
    """Raise unless ``adjacency`` is a binary square matrix with zero diagonal."""
    if adjacency.ndim != 2 or adjacency.shape[0] != adjacency.shape[1]:
        raise DimensionMismatch(f"adjacency must be square, got shape {adjacency.shape}")
    if n is not None and adjacency.shape[0] != n:
        raise DimensionMismatch(
            f"adjacency is {adjacency.shape[0]}x{adjacency.shape[0]} for {n} nodes"
        )
    if not np.all((adjacency == 0.0) | (adjacency == 1.0)):
        raise NonBinaryAdjacency("adjacency entries must be 0 or 1")
    if np.any(np.diagonal(adjacency) != 0.0):
        raise NonBinaryAdjacency("adjacency diagonal must be zero")


def forward(model: MPNNModel, features, adjacency) -> np.ndarray:
    """Exact forward value: an ``N x C`` matrix, or a length-``C`` vector after pooling."""
    feats = _as_float_matrix(features, "features")
    adj = np.asarray(adjacency, dtype=np.float64)
    check_adjacency(adj, feats.shape[0])
    if feats.shape[1] != model.d0:
        raise DimensionMismatch(
            f"features have {feats.shape[1]} columns, model expects {model.d0}"
        )
    h = feats
    for layer in model.mp_layers:
        pre = h @ layer.w_self + adj.T @ h @ layer.w_neigh + layer.bias
        h = layer.apply_activation(pre)
    if model.pooling == POOL_ADD:
        h = h.sum(axis=0)
    for layer in model.dense:
        h = layer.apply_activation(h @ layer.w_self + layer.bias)
    return h


@dataclass(frozen=True)
class ForwardTrace:
    """All intermediate values of one exact forward evaluation."""

    preacts: tuple[np.ndarray, ...]
    postacts: tuple[np.ndarray, ...]
    pooled: Optional[np.ndarray]
    dense_preacts: tuple[np.ndarray, ...]
    dense_postacts: tuple[np.ndarray, ...]
    output: np.ndarray


def forward_trace(model: MPNNModel, features, adjacency) -> ForwardTrace:
    """Forward evaluation that keeps every layer's pre/post activations."""
    feats = _as_float_matrix(features, "features")
    adj = np.asarray(adjacency, dtype=np.float64)
    check_adjacency(adj, feats.shape[0])
    if feats.shape[1] != model.d0:
        raise DimensionMismatch(
            f"features have {feats.shape[1]} columns, model expects {model.d0}"
        )
    pres, posts = [], []
    h = feats
    for layer in model.mp_layers:
        pre = h @ layer.w_self + adj.T @ h @ layer.w_neigh + layer.bias
        h = layer.apply_activation(pre)
        pres.append(pre)
        posts.append(h)
    pooled = None
    dpres, dposts = [], []
    if model.pooling == POOL_ADD:
        pooled = h.sum(axis=0)
        h = pooled
        for layer in model.dense:
            pre = h @ layer.w_self + layer.bias
            h = layer.apply_activation(pre)
            dpres.append(pre)
            dposts.append(h)
    return ForwardTrace(
        preacts=tuple(pres),
        postacts=tuple(posts),
        pooled=pooled,
        dense_preacts=tuple(dpres),
        dense_postacts=tuple(dposts),
        output=h,
    )


def logits_for_instance(model: MPNNModel, instance: GraphInstance, adjacency=None) -> np.ndarray:
    adj = instance.adjacency if adjacency is None else adjacency
    return forward(model, instance.features, adj)


def margin(
    model: MPNNModel,
    features,
    adjacency,
    c_star: int,
    c: int,
    target_node: Optional[int] = None,
) -> float:
    """Signed margin ``f_{c*} - f_c`` at one exact input point."""
    if c_star == c:
        raise InvalidClass("margin needs two distinct classes")
    if not (0 <= c_star < model.dL and 0 <= c < model.dL):
        raise InvalidClass(f"class index out of range for {model.dL} classes")
    out = forward(model, features, adjacency)
    if target_node is not None:
        if model.pooling != POOL_NONE:
            raise InconsistentInput("node-level margin requires pooling = none")
        return float(out[target_node, c_star] - out[target_node, c])
    if out.ndim != 1:
        raise InconsistentInput("graph-level margin requires pooling")
    return float(out[c_star] - out[c])


def instance_margin(model: MPNNModel, instance: GraphInstance, adjacency=None) -> float:
    """Margin of ``instance`` at its own (or a supplied) adjacency."""
    adj = instance.adjacency if adjacency is None else adjacency
    return margin(
        model,
        instance.features,
        adj,
        instance.label_true,
        instance.label_attack,
        instance.target_node,
    )


def validate_pair(model: MPNNModel, instance: GraphInstance) -> None:
    """Raise unless the model can evaluate the instance and its labels."""
    if instance.features.shape[1] != model.d0:
        raise DimensionMismatch(
            f"instance has {instance.features.shape[1]} features, model expects {model.d0}"
        )
    if instance.label_true >= model.dL or instance.label_attack >= model.dL:
        raise InvalidClass(f"labels must be < {model.dL}")
    if instance.is_node_task and model.pooling != POOL_NONE:
        raise InconsistentInput("node task requires pooling = none")
    if not instance.is_node_task and model.pooling != POOL_ADD:
        raise InconsistentInput("graph task requires add pooling")


def load_model(path) -> MPNNModel:
    with open(path, "r", encoding="utf-8") as fh:
        return MPNNModel.from_dict(json.load(fh))


def load_instance(path) -> GraphInstance:
    with open(path, "r", encoding="utf-8") as fh:
        return GraphInstance.from_dict(json.load(fh))
