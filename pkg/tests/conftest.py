"""Shared fixtures: hand-built instances, a random generator, and the
edge-list forward oracle used to cross-check the vectorized evaluation."""

from __future__ import annotations

import numpy as np
import pytest

from gnncert import Fixings, GraphInstance, MPNNLayer, MPNNModel, PerturbationSpec
from gnncert.errors import InconsistentFixings
from gnncert.perturbation import candidate_pairs, validate_fixings


def path3_adjacency() -> np.ndarray:
    adj = np.zeros((3, 3))
    adj[0, 1] = adj[1, 0] = 1.0
    adj[1, 2] = adj[2, 1] = 1.0
    return adj


def path3_features() -> np.ndarray:
    return np.array([[1.0], [-2.0], [3.0]])


def path3_layer() -> MPNNLayer:
    return MPNNLayer(w_self=[[1.0]], w_neigh=[[1.0]], bias=[0.0])


def path3_graph_model(head_bias: float = 4.0) -> MPNNModel:
    """One ReLU layer, add pooling, 2-class head with margin = head_bias - pooled."""
    head = MPNNLayer(
        w_self=[[0.0, 1.0]], w_neigh=[[0.0, 0.0]], bias=[head_bias, 0.0], activation="identity"
    )
    return MPNNModel(mp_layers=(path3_layer(),), pooling="add", dense=(head,))


def path3_instance() -> GraphInstance:
    return GraphInstance(
        features=path3_features(),
        adjacency=path3_adjacency(),
        directed=False,
        label_true=0,
        label_attack=1,
    )


def path3_spec() -> PerturbationSpec:
    return PerturbationSpec(mode="p1", global_budget=1, local_budgets=(1, 1, 1))


@pytest.fixture
def path3():
    """Margin 4 - pooled: nonrobust, the only attack adds edge {0, 2}."""
    return path3_graph_model(4.0), path3_instance(), path3_spec()


@pytest.fixture
def path3_robust():
    """Margin 7 - pooled: robust (min margin 1), loose at the basic root."""
    return path3_graph_model(7.0), path3_instance(), path3_spec()


def reference_forward(model: MPNNModel, features, adjacency) -> np.ndarray:
    """Independent evaluation: explicit per-node loops over an edge list."""
    feats = np.asarray(features, dtype=float)
    adj = np.asarray(adjacency, dtype=float)
    n = feats.shape[0]
    edges = [(u, v) for u in range(n) for v in range(n) if adj[u, v] == 1.0]
    h = feats
    for layer in model.mp_layers:
        nxt = np.zeros((n, layer.d_out))
        for v in range(n):
            acc = np.array(layer.bias, dtype=float)
            for f_out in range(layer.d_out):
                for f_in in range(layer.d_in):
                    acc[f_out] += layer.w_self[f_in, f_out] * h[v, f_in]
            for (u, w) in edges:
                if w != v:
                    continue
                for f_out in range(layer.d_out):
                    for f_in in range(layer.d_in):
                        acc[f_out] += layer.w_neigh[f_in, f_out] * h[u, f_in]
            nxt[v] = np.maximum(acc, 0.0) if layer.activation == "relu" else acc
        h = nxt
    if model.pooling == "add":
        pooled = np.zeros(model.mp_layers[-1].d_out)
        for v in range(n):
            pooled += h[v]
        h = pooled
        for layer in model.dense:
            acc = np.array(layer.bias, dtype=float)
            for f_out in range(layer.d_out):
                for f_in in range(layer.d_in):
                    acc[f_out] += layer.w_self[f_in, f_out] * h[f_in]
            h = np.maximum(acc, 0.0) if layer.activation == "relu" else acc
    return h


def random_graph(rng: np.random.Generator, n: int, directed: bool, density: float = 0.5):
    adj = (rng.random((n, n)) < density).astype(float)
    np.fill_diagonal(adj, 0.0)
    if not directed:
        adj = np.triu(adj, 1)
        adj = adj + adj.T
    return adj


def random_setup(
    rng: np.random.Generator,
    n_max: int = 8,
    d_max: int = 3,
    l_max: int = 2,
    q_max: int = 2,
    node_task=None,
    mode=None,
    weight_scale: float = 1.0,
    margin_target=None,
):
    """One random (model, instance, spec) triple at desk scale.

    ``margin_target`` recenters the unperturbed margin by shifting the
    attack-class output bias, producing instances that sit near the
    robust/nonrobust boundary instead of being decided by the bias draw.
    """
    n = int(rng.integers(2, n_max + 1))
    d0 = int(rng.integers(1, d_max + 1))
    n_layers = int(rng.integers(1, l_max + 1))
    if node_task is None:
        node_task = bool(rng.random() < 0.5)
    if mode is None:
        mode = "p1" if rng.random() < 0.5 else "p2"
    directed = bool(mode == "p2" and rng.random() < 0.5)

    widths = [d0] + [int(rng.integers(1, d_max + 1)) for _ in range(n_layers)]
    if node_task:
        widths[-1] = max(2, widths[-1])

    def rand_layer(d_in, d_out, activation="relu"):
        scale = weight_scale / np.sqrt(d_in)
        return MPNNLayer(
            w_self=rng.normal(0.0, scale, size=(d_in, d_out)),
            w_neigh=rng.normal(0.0, scale, size=(d_in, d_out)),
            bias=rng.normal(0.0, 0.3, size=d_out),
            activation=activation,
        )

    mp = [rand_layer(widths[i], widths[i + 1]) for i in range(n_layers)]
    if node_task:
        mp[-1] = rand_layer(widths[-2], widths[-1], activation="identity")
        model = MPNNModel(mp_layers=tuple(mp), pooling="none")
    else:
        classes = int(rng.integers(2, 4))
        d_last = widths[-1]
        scale = weight_scale / np.sqrt(d_last)
        head = MPNNLayer(
            w_self=rng.normal(0.0, scale, size=(d_last, classes)),
            w_neigh=np.zeros((d_last, classes)),
            bias=rng.normal(0.0, 0.3, size=classes),
            activation="identity",
        )
        model = MPNNModel(mp_layers=tuple(mp), pooling="add", dense=(head,))

    adjacency = random_graph(rng, n, directed)
    features = rng.normal(0.0, 1.0, size=(n, d0))
    classes = model.dL
    label_true = int(rng.integers(0, classes))
    label_attack = (label_true + 1) % classes
    instance = GraphInstance(
        features=features,
        adjacency=adjacency,
        directed=directed,
        label_true=label_true,
        label_attack=label_attack,
        target_node=int(rng.integers(0, n)) if node_task else None,
    )
    spec = PerturbationSpec(
        mode=mode,
        global_budget=int(rng.integers(0, q_max + 1)),
        local_budgets=tuple(int(q) for q in rng.integers(0, 3, size=n)),
    )
    if margin_target is not None:
        model = _recenter_margin(model, instance, margin_target)
    return model, instance, spec


def _recenter_margin(model: MPNNModel, instance, target: float) -> MPNNModel:
    """Shift the attack-class bias so the unperturbed margin equals target."""
    from gnncert import instance_margin

    shift = instance_margin(model, instance) - target
    c = instance.label_attack
    if model.dense:
        last = model.dense[-1]
        bias = np.array(last.bias)
        bias[c] += shift
        patched = MPNNLayer(last.w_self, last.w_neigh, bias, last.activation)
        return MPNNModel(model.mp_layers, model.pooling, model.dense[:-1] + (patched,))
    last = model.mp_layers[-1]
    bias = np.array(last.bias)
    bias[c] += shift
    patched = MPNNLayer(last.w_self, last.w_neigh, bias, last.activation)
    return MPNNModel(model.mp_layers[:-1] + (patched,), model.pooling, model.dense)


def random_fixing_chain(rng: np.random.Generator, instance, spec, max_steps: int = 4):
    """Nested consistent fixings, from empty to progressively more decided."""
    chain = [Fixings()]
    pairs = candidate_pairs(instance.adjacency, spec)
    undirected = spec.mode == "p1"
    for _ in range(int(rng.integers(0, max_steps + 1))):
        current = chain[-1]
        free = [p for p in pairs if p not in current.decided()]
        if not free:
            break
        u, v = free[int(rng.integers(0, len(free)))]
        value = int(rng.integers(0, 2))
        trial = current.with_pair(u, v, value, undirected)
        try:
            validate_fixings(instance.adjacency, spec, trial)
        except InconsistentFixings:
            continue
        chain.append(trial)
    return chain


def consistent_with(adjacency: np.ndarray, fixings: Fixings) -> bool:
    for u, v in fixings.fixed_zero:
        if adjacency[u, v] != 0.0:
            return False
    for u, v in fixings.fixed_one:
        if adjacency[u, v] != 1.0:
            return False
    return True
