import itertools

import numpy as np
import pytest

from gnncert import (
    BudgetState,
    Fixings,
    GraphInstance,
    MPNNModel,
    PerturbationSpec,
    attack_label,
    enumerate_admissible,
    extract_khop,
    forward,
    is_admissible,
    local_budget_from_degree,
    remaining_local_budget,
)
from gnncert.errors import (
    CapExceeded,
    DimensionMismatch,
    InconsistentFixings,
    ModeMismatch,
)
from gnncert.perturbation import validate_fixings

from conftest import path3_adjacency, path3_layer, random_graph, random_setup


def spec_p1(q=(1, 1, 1), Q=1):
    return PerturbationSpec(mode="p1", global_budget=Q, local_budgets=q)


def test_base_matrix_is_admissible():
    base = path3_adjacency()
    assert is_admissible(base, base, spec_p1())
    assert is_admissible(base, base, PerturbationSpec("p2", 0, (0, 0, 0)))


def test_single_flip_within_budgets():
    base = path3_adjacency()
    flipped = base.copy()
    flipped[0, 1] = flipped[1, 0] = 0.0
    assert is_admissible(flipped, base, spec_p1())


def test_p2_rejects_added_edge():
    base = np.zeros((2, 2))
    added = base.copy()
    added[0, 1] = 1.0
    spec = PerturbationSpec("p2", 5, (5, 5))
    assert not is_admissible(added, base, spec)


def test_p1_rejects_asymmetric():
    base = path3_adjacency()
    bad = base.copy()
    bad[0, 1] = 0.0
    assert not is_admissible(bad, base, spec_p1(Q=5, q=(5, 5, 5)))


def test_global_and_local_budget_enforced():
    base = np.zeros((3, 3))
    both = base.copy()
    both[0, 1] = both[1, 0] = 1.0
    both[0, 2] = both[2, 0] = 1.0
    # two flips need Q >= 2 and two changes in column 0
    assert not is_admissible(both, base, spec_p1(q=(2, 2, 2), Q=1))
    assert not is_admissible(both, base, spec_p1(q=(1, 2, 2), Q=2))
    assert is_admissible(both, base, spec_p1(q=(2, 1, 1), Q=2))


def test_is_admissible_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        is_admissible(np.zeros((2, 2)), np.zeros((3, 3)), spec_p1())


def test_remaining_local_budget_examples():
    spec = PerturbationSpec("p1", 2, (3, 3, 3, 3))
    state = BudgetState(removed_per_node=(1, 1, 0, 0), added_per_node=(1, 1, 0, 0))
    assert remaining_local_budget(spec, state, 0) == 0  # min{1, 0}

    spec = PerturbationSpec("p1", 10, (5, 5))
    state = BudgetState((0, 0), (0, 0))
    assert remaining_local_budget(spec, state, 0) == 5  # min{5, 20}

    spec = PerturbationSpec("p1", 10, (1, 1, 1))
    state = BudgetState((2, 0, 0), (0, 0, 0))
    assert remaining_local_budget(spec, state, 0) == 0  # clamped


def test_remaining_local_budget_root_values():
    rng = np.random.default_rng(5)
    for _ in range(50):
        _, instance, spec = random_setup(rng)
        root = BudgetState.from_fixings(instance.adjacency, Fixings())
        cap = 2 * spec.global_budget if spec.mode == "p1" else spec.global_budget
        for v in range(instance.n):
            assert remaining_local_budget(spec, root, v) == min(spec.local_budgets[v], cap)


def test_local_budget_from_degree():
    assert local_budget_from_degree([3, 4], 2).tolist() == [1, 2]
    assert local_budget_from_degree([1, 5], 2).tolist() == [0, 2]
    assert local_budget_from_degree([4, 4], 2).tolist() == [2, 2]


def test_attack_label_convention():
    assert attack_label(0, 2) == 1
    assert attack_label(1, 2) == 0
    assert attack_label(5, 6) == 0


def star_instance(leaves=3, inward=True):
    n = leaves + 1
    adj = np.zeros((n, n))
    for leaf in range(1, n):
        if inward:
            adj[leaf, 0] = 1.0
        else:
            adj[0, leaf] = 1.0
    x = np.arange(n, dtype=float).reshape(n, 1)
    return GraphInstance(features=x, adjacency=adj, directed=True,
                         label_true=0, label_attack=1, target_node=0)


def test_khop_star_center():
    instance = star_instance()
    spec = PerturbationSpec("p2", 2, (1,) * instance.n)
    res = extract_khop(instance, 0, 1, spec)
    assert res.original_nodes == (0, 1, 2, 3)
    assert res.instance.target_node == 0


def test_khop_directed_path():
    # edges 1->0, 2->1, 3->2; two hops from 0 reach {0, 1, 2}
    adj = np.zeros((4, 4))
    adj[1, 0] = adj[2, 1] = adj[3, 2] = 1.0
    instance = GraphInstance(features=np.ones((4, 1)), adjacency=adj, directed=True,
                             label_true=0, label_attack=1, target_node=0)
    spec = PerturbationSpec("p2", 2, (1, 1, 1, 1))
    res = extract_khop(instance, 0, 2, spec)
    assert res.original_nodes == (0, 1, 2)
    assert res.spec.local_budgets == (1, 1, 1)


def test_khop_isolated_target():
    adj = np.zeros((3, 3))
    adj[1, 2] = 1.0
    instance = GraphInstance(features=np.ones((3, 1)), adjacency=adj, directed=True,
                             label_true=0, label_attack=1, target_node=0)
    spec = PerturbationSpec("p2", 2, (1, 1, 1))
    res = extract_khop(instance, 0, 5, spec)
    assert res.original_nodes == (0,)


def test_khop_rejects_p1():
    instance = star_instance()
    with pytest.raises(ModeMismatch):
        extract_khop(instance, 0, 1, spec_p1(q=(1,) * instance.n))


def test_khop_preserves_target_forward():
    rng = np.random.default_rng(17)
    for _ in range(30):
        model, instance, _ = random_setup(rng, n_max=9, mode="p2", node_task=True)
        spec = PerturbationSpec("p2", 3, (1,) * instance.n)
        t = instance.target_node
        res = extract_khop(instance, t, model.num_mp_layers, spec)
        full = forward(model, instance.features, instance.adjacency)
        sub = forward(model, res.instance.features, res.instance.adjacency)
        assert np.max(np.abs(sub[res.instance.target_node] - full[t])) <= 1e-9


def test_enumerate_single_edge_base():
    base = np.zeros((3, 3))
    base[0, 1] = base[1, 0] = 1.0
    mats = list(enumerate_admissible(base, spec_p1()))
    assert len(mats) == 4  # base + 3 single flips
    assert np.array_equal(mats[0], base)


def test_enumerate_zero_budget():
    base = path3_adjacency()
    mats = list(enumerate_admissible(base, spec_p1(Q=0)))
    assert len(mats) == 1
    assert np.array_equal(mats[0], base)


def test_enumerate_p2_counts_subsets():
    base = path3_adjacency()  # 4 ordered entries
    m = int(base.sum())
    spec = PerturbationSpec("p2", m, tuple(int(d) for d in base.sum(axis=0)))
    mats = list(enumerate_admissible(base, spec))
    assert len(mats) == 2 ** m


def test_enumerate_cap():
    base = np.zeros((4, 4))
    spec = PerturbationSpec("p1", 6, (6,) * 4)
    with pytest.raises(CapExceeded):
        list(enumerate_admissible(base, spec, cap=3))


def _exhaustive_admissible(base, spec):
    """Independent oracle: filter all binary matrices on candidate positions."""
    n = base.shape[0]
    if spec.mode == "p1":
        positions = [(u, v) for u in range(n) for v in range(u + 1, n)]
    else:
        positions = [(u, v) for u in range(n) for v in range(n)
                     if u != v and base[u, v] == 1.0]
    found = []
    for bits in itertools.product([0.0, 1.0], repeat=len(positions)):
        a = np.array(base)
        for (u, v), bit in zip(positions, bits):
            a[u, v] = bit
            if spec.mode == "p1":
                a[v, u] = bit
        if is_admissible(a, base, spec) and not any(np.array_equal(a, f) for f in found):
            found.append(a)
    return found


@pytest.mark.parametrize("seed", range(12))
def test_enumerate_matches_exhaustive_filter(seed):
    rng = np.random.default_rng(100 + seed)
    _, instance, spec = random_setup(rng, n_max=4, q_max=2)
    got = list(enumerate_admissible(instance.adjacency, spec))
    want = _exhaustive_admissible(instance.adjacency, spec)
    assert len(got) == len(want)
    for g in got:
        assert is_admissible(g, instance.adjacency, spec)
        assert any(np.array_equal(g, w) for w in want)
    # exactly once
    for i, g in enumerate(got):
        for h in got[i + 1:]:
            assert not np.array_equal(g, h)


def test_fixings_validation():
    with pytest.raises(InconsistentFixings):
        Fixings(frozenset({(0, 1)}), frozenset({(0, 1)}))
    with pytest.raises(InconsistentFixings):
        Fixings(frozenset({(1, 1)}), frozenset())
    asym = Fixings(frozenset({(0, 1)}), frozenset())
    with pytest.raises(InconsistentFixings):
        asym.check_symmetric()


def test_validate_fixings_budgets():
    base = path3_adjacency()
    spec = spec_p1(q=(1, 1, 1), Q=1)
    # removing both edges exceeds the global cap of 2 entries... it spends 4
    fix = Fixings(frozenset({(0, 1), (1, 0), (1, 2), (2, 1)}), frozenset())
    with pytest.raises(InconsistentFixings):
        validate_fixings(base, spec, fix)
    # adding a non-edge under p2 is inconsistent
    spec2 = PerturbationSpec("p2", 3, (3, 3, 3))
    fix2 = Fixings(frozenset(), frozenset({(0, 2)}))
    with pytest.raises(InconsistentFixings):
        validate_fixings(base, spec2, fix2)
    # keeping an existing edge spends nothing
    keep = Fixings(frozenset(), frozenset({(0, 1), (1, 0)}))
    state = validate_fixings(base, spec, keep)
    assert state.total_removed == 0 and state.total_added == 0


def test_fixings_apply_and_children():
    base = path3_adjacency()
    fix = Fixings().with_pair(0, 2, 1, undirected=True)
    out = fix.apply_to(base)
    assert out[0, 2] == 1.0 and out[2, 0] == 1.0
    state = BudgetState.from_fixings(base, fix)
    assert state.added_per_node == (1, 0, 1)
    assert state.removed_per_node == (0, 0, 0)


def test_spec_json_roundtrip_and_local_rule():
    spec = spec_p1()
    clone = PerturbationSpec.from_dict(spec.to_dict())
    assert clone == spec
    instance = GraphInstance(
        features=np.ones((3, 1)), adjacency=path3_adjacency(), directed=False,
        label_true=0, label_attack=1,
    )
    derived = PerturbationSpec.from_dict(
        {"mode": "p1", "global_budget": 2, "local_rule": {"strength": 2}}, instance
    )
    # degrees (1, 2, 1), max 2 -> budgets (1, 2, 1)
    assert derived.local_budgets == (1, 2, 1)
