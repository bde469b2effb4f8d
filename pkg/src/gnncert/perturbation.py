"""Perturbation sets, budget accounting, k-hop extraction, and enumeration.

Two attack modes are supported:

* ``p1``: undirected add/remove flips.  A flip of the pair {u, v} toggles
  both ordered entries, so the global cap on changed entries is ``2Q`` and
  each endpoint column spends one unit of its local budget.
* ``p2``: directed remove-only.  Entries may only go from 1 to 0, the
  global cap is ``Q``, and a removal spends local budget at the target
  column only.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from .errors import (
    CapExceeded,
    DimensionMismatch,
    InconsistentFixings,
    InconsistentInput,
    ModeMismatch,
)
from .model import GraphInstance, check_adjacency

MODE_P1 = "p1"
MODE_P2 = "p2"


@dataclass(frozen=True)
class PerturbationSpec:
    """Attack mode plus global budget Q and per-node local budgets q_v.

    ``tight_root_budget`` caps a single column's changes by Q instead of 2Q
    under undirected flips (each flip touching a column spends two global
    entry units, so Q is still sound and strictly tighter).  Off by default:
    the published budget equation uses 2Q.
    """

    mode: str
    global_budget: int
    local_budgets: tuple[int, ...]
    tight_root_budget: bool = False

    def __post_init__(self):
        if self.mode not in (MODE_P1, MODE_P2):
            raise InconsistentInput(f"unknown perturbation mode {self.mode!r}")
        if self.global_budget < 0:
            raise InconsistentInput("global budget must be nonnegative")
        budgets = tuple(int(q) for q in self.local_budgets)
        if any(q < 0 for q in budgets):
            raise InconsistentInput("local budgets must be nonnegative")
        object.__setattr__(self, "local_budgets", budgets)

    @property
    def n(self) -> int:
        return len(self.local_budgets)

    @property
    def undirected(self) -> bool:
        return self.mode == MODE_P1

    def entry_cap(self) -> int:
        """Cap on the number of changed ordered adjacency entries."""
        return 2 * self.global_budget if self.mode == MODE_P1 else self.global_budget

    def flip_entry_cost(self) -> int:
        """Ordered entries consumed by one elementary change."""
        return 2 if self.mode == MODE_P1 else 1

    def column_change_cap(self) -> int:
        """Most changes a single column can absorb from the global budget."""
        if self.mode == MODE_P1 and self.tight_root_budget:
            return self.global_budget
        return self.entry_cap()

    def validate_for(self, instance: GraphInstance) -> None:
        if self.n != instance.n:
            raise DimensionMismatch(
                f"spec has {self.n} local budgets for {instance.n} nodes"
            )
        if self.mode == MODE_P1 and instance.directed:
            raise InconsistentInput("mode p1 requires an undirected instance")

    def to_dict(self) -> dict:
        out = {
            "mode": self.mode,
            "global_budget": int(self.global_budget),
            "local_budgets": list(self.local_budgets),
        }
        if self.tight_root_budget:
            out["tight_root_budget"] = True
        return out

    @classmethod
    def from_dict(cls, data: dict, instance: Optional[GraphInstance] = None) -> "PerturbationSpec":
        """Build from JSON; ``local_rule`` derives budgets from node degrees."""
        if "local_budgets" in data and data["local_budgets"] is not None:
            budgets = tuple(int(q) for q in data["local_budgets"])
        elif "local_rule" in data and data["local_rule"] is not None:
            if instance is None:
                raise InconsistentInput("local_rule needs a graph to derive budgets from")
            strength = int(data["local_rule"]["strength"])
            budgets = tuple(local_budget_from_degree(instance.degrees(), strength).tolist())
        else:
            raise InconsistentInput("spec needs local_budgets or local_rule")
        return cls(
            mode=data["mode"],
            global_budget=int(data["global_budget"]),
            local_budgets=budgets,
            tight_root_budget=bool(data.get("tight_root_budget", False)),
        )


def load_spec(path, instance: Optional[GraphInstance] = None) -> PerturbationSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return PerturbationSpec.from_dict(json.load(fh), instance)


@dataclass(frozen=True)
class Fixings:
    """Adjacency entries already decided: (u, v) sets fixed to 0 and to 1."""

    fixed_zero: frozenset[tuple[int, int]] = frozenset()
    fixed_one: frozenset[tuple[int, int]] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "fixed_zero", frozenset(self.fixed_zero))
        object.__setattr__(self, "fixed_one", frozenset(self.fixed_one))
        if self.fixed_zero & self.fixed_one:
            raise InconsistentFixings("an entry is fixed to both 0 and 1")
        for u, v in itertools.chain(self.fixed_zero, self.fixed_one):
            if u == v:
                raise InconsistentFixings("diagonal entries cannot be fixed")

    def check_symmetric(self) -> None:
        for pairs in (self.fixed_zero, self.fixed_one):
            for u, v in pairs:
                if (v, u) not in pairs:
                    raise InconsistentFixings(f"undirected fixing ({u}, {v}) lacks its mirror")

    def zero_into(self, v: int) -> frozenset[int]:
        return frozenset(u for (u, w) in self.fixed_zero if w == v)

    def one_into(self, v: int) -> frozenset[int]:
        return frozenset(u for (u, w) in self.fixed_one if w == v)

    def decided(self) -> frozenset[tuple[int, int]]:
        return self.fixed_zero | self.fixed_one

    def with_pair(self, u: int, v: int, value: int, undirected: bool) -> "Fixings":
        """New fixings with entry (u, v) (and its mirror when undirected) decided."""
        add = {(u, v), (v, u)} if undirected else {(u, v)}
        if value == 1:
            return Fixings(self.fixed_zero, self.fixed_one | add)
        return Fixings(self.fixed_zero | add, self.fixed_one)

    def apply_to(self, base: np.ndarray) -> np.ndarray:
        """Base adjacency with all fixings substituted."""
        out = np.array(base, dtype=np.float64)
        for u, v in self.fixed_zero:
            out[u, v] = 0.0
        for u, v in self.fixed_one:
            out[u, v] = 1.0
        return out

    def to_dict(self) -> dict:
        return {
            "fixed_zero": sorted([list(p) for p in self.fixed_zero]),
            "fixed_one": sorted([list(p) for p in self.fixed_one]),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Fixings":
        return cls(
            fixed_zero=frozenset((int(u), int(v)) for u, v in data.get("fixed_zero", [])),
            fixed_one=frozenset((int(u), int(v)) for u, v in data.get("fixed_one", [])),
        )


EMPTY_FIXINGS = Fixings()


@dataclass(frozen=True)
class BudgetState:
    """Removed/added edge counts per target column, implied by some fixings."""

    removed_per_node: tuple[int, ...]
    added_per_node: tuple[int, ...]

    @classmethod
    def from_fixings(cls, base: np.ndarray, fixings: Fixings) -> "BudgetState":
        n = base.shape[0]
        removed = [0] * n
        added = [0] * n
        for u, v in fixings.fixed_zero:
            if base[u, v] > 0.5:
                removed[v] += 1
        for u, v in fixings.fixed_one:
            if base[u, v] < 0.5:
                added[v] += 1
        return cls(tuple(removed), tuple(added))

    @property
    def total_removed(self) -> int:
        return sum(self.removed_per_node)

    @property
    def total_added(self) -> int:
        return sum(self.added_per_node)


EMPTY_BUDGET = BudgetState((), ())


def remaining_local_budget(spec: PerturbationSpec, state: BudgetState, v: int) -> int:
    """Changes still allowed in column v, clamped at zero.

    The local budget minus spent changes at v, capped by what is left of the
    global entry budget (2Q for p1, Q for p2).
    """
    if state.removed_per_node:
        e_r_v = state.removed_per_node[v]
        e_a_v = state.added_per_node[v]
        spent = state.total_removed + state.total_added
    else:
        e_r_v = e_a_v = spent = 0
    local = spec.local_budgets[v] - e_r_v - e_a_v
    if spec.mode == MODE_P1 and spec.tight_root_budget:
        global_left = spec.global_budget - spent // 2
    else:
        global_left = spec.entry_cap() - spent
    return max(0, min(local, global_left))


def local_budget_from_degree(degrees, s: int) -> np.ndarray:
    """Per-node budgets max{0, d_v - max_u d_u + s}."""
    d = np.asarray(degrees, dtype=np.int64)
    if d.size == 0:
        return d
    return np.maximum(0, d - int(d.max()) + int(s))


def attack_label(label_true: int, num_classes: int) -> int:
    """Conventional attack class (c* + 1) mod C."""
    return (label_true + 1) % num_classes


def is_admissible(adjacency, base, spec: PerturbationSpec) -> bool:
    """Whether ``adjacency`` lies in the perturbation set of ``base``."""
    a = np.asarray(adjacency, dtype=np.float64)
    b = np.asarray(base, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"adjacency {a.shape} vs base {b.shape}")
    check_adjacency(a)
    check_adjacency(b)
    if a.shape[0] != spec.n:
        raise DimensionMismatch(f"matrices are {a.shape[0]}x{a.shape[0]} for spec of {spec.n}")
    diff = a != b
    if spec.mode == MODE_P1:
        if not np.array_equal(a, a.T):
            return False
    else:
        if np.any(a > b):
            return False
    if diff.sum() > spec.entry_cap():
        return False
    col_changes = diff.sum(axis=0)
    return bool(np.all(col_changes <= np.asarray(spec.local_budgets)))


@dataclass(frozen=True)
class KhopResult:
    """Induced-subgraph extraction: relabeled instance, spec, and id mapping."""

    instance: GraphInstance
    spec: PerturbationSpec
    original_nodes: tuple[int, ...]  # original_nodes[new_id] = old_id


def extract_khop(
    instance: GraphInstance, t: int, k: int, spec: PerturbationSpec
) -> KhopResult:
    """Induced subgraph on nodes within k incoming hops of t.

    Only valid under remove-only perturbations: added edges could otherwise
    pull in nodes from outside the extracted neighborhood.
    """
    if spec.mode != MODE_P2:
        raise ModeMismatch("k-hop extraction is only sound under mode p2")
    spec.validate_for(instance)
    if not (0 <= t < instance.n):
        raise InconsistentInput(f"target node {t} out of range")
    adj = instance.adjacency
    reached = {t}
    frontier = {t}
    for _ in range(k):
        nxt = set()
        for v in frontier:
            nxt.update(np.flatnonzero(adj[:, v] > 0.5).tolist())
        frontier = nxt - reached
        reached |= frontier
        if not frontier:
            break
    keep = sorted(reached)
    index = {old: new for new, old in enumerate(keep)}
    sub_adj = adj[np.ix_(keep, keep)]
    sub = GraphInstance(
        features=instance.features[keep],
        adjacency=sub_adj,
        directed=instance.directed,
        label_true=instance.label_true,
        label_attack=instance.label_attack,
        target_node=index[t],
    )
    sub_spec = PerturbationSpec(
        mode=spec.mode,
        global_budget=spec.global_budget,
        local_budgets=tuple(spec.local_budgets[old] for old in keep),
    )
    return KhopResult(instance=sub, spec=sub_spec, original_nodes=tuple(keep))


def validate_fixings(base: np.ndarray, spec: PerturbationSpec, fixings: Fixings) -> BudgetState:
    """Check fixings against mode and budgets; return the implied budget state."""
    if spec.mode == MODE_P1:
        fixings.check_symmetric()
    else:
        for u, v in fixings.fixed_one:
            if base[u, v] < 0.5:
                raise InconsistentFixings(f"({u}, {v}) fixed to 1 but absent under remove-only mode")
    state = BudgetState.from_fixings(base, fixings)
    if state.total_removed + state.total_added > spec.entry_cap():
        raise InconsistentFixings(
            f"fixings spend {state.total_removed + state.total_added} entry changes, "
            f"cap is {spec.entry_cap()}"
        )
    for v in range(spec.n):
        spent = state.removed_per_node[v] + state.added_per_node[v]
        if spent > spec.local_budgets[v]:
            raise InconsistentFixings(
                f"column {v} spends {spent} changes, local budget is {spec.local_budgets[v]}"
            )
    return state


def candidate_pairs(base: np.ndarray, spec: PerturbationSpec) -> list[tuple[int, int]]:
    """Adjacency decisions that are free in principle.

    p1: every unordered pair (u < v).  p2: every existing ordered edge.
    """
    n = base.shape[0]
    if spec.mode == MODE_P1:
        return [(u, v) for u in range(n) for v in range(u + 1, n)]
    us, vs = np.nonzero(base)
    return sorted(zip(us.tolist(), vs.tolist()))


def _within_local_budgets(pairs, spec: PerturbationSpec) -> bool:
    counts = [0] * spec.n
    for u, v in pairs:
        counts[v] += 1
        if counts[v] > spec.local_budgets[v]:
            return False
        if spec.mode == MODE_P1:
            counts[u] += 1
            if counts[u] > spec.local_budgets[u]:
                return False
    return True


def enumerate_admissible(
    base, spec: PerturbationSpec, cap: int = 100_000
) -> Iterator[np.ndarray]:
    """Yield every admissible adjacency exactly once, the base matrix first.

    Enumerates change sets by size, so output order is deterministic.  Raises
    ``CapExceeded`` as soon as more than ``cap`` matrices would be produced.
    """
    b = np.asarray(base, dtype=np.float64)
    check_adjacency(b)
    if b.shape[0] != spec.n:
        raise DimensionMismatch(f"base is {b.shape[0]}x{b.shape[0]} for spec of {spec.n}")
    pairs = candidate_pairs(b, spec)
    max_changes = min(len(pairs), spec.entry_cap() // spec.flip_entry_cost())
    produced = 0
    for size in range(max_changes + 1):
        for subset in itertools.combinations(pairs, size):
            if not _within_local_budgets(subset, spec):
                continue
            produced += 1
            if produced > cap:
                raise CapExceeded(f"enumeration exceeded cap of {cap} matrices")
            out = np.array(b)
            for u, v in subset:
                if spec.mode == MODE_P1:
                    flipped = 1.0 - out[u, v]
                    out[u, v] = flipped
                    out[v, u] = flipped
                else:
                    out[u, v] = 0.0
            yield out
