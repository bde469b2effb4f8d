"""Complete robustness decision procedure over budgeted edge perturbations.

Best-first branch-and-bound on the adjacency decisions.  Each tree node
carries edge fixings; its dual bound is the lower end of the propagated
margin interval under the configured bounds strategy.  A node with no
affordable undecided pair has a singleton feasible set and is evaluated
exactly, so the search always terminates with the correct verdict.  The
search stops as soon as an admissible attack with negative margin is found
or the global dual bound reaches zero (a margin of exactly zero counts as
robust).
"""

from __future__ import annotations

import heapq
import time
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .bounds import STRATEGIES, STRATEGY_ABT, propagate
from .errors import InconsistentInput, NoBranchCandidate
from .model import GraphInstance, MPNNModel, instance_margin, validate_pair
from .perturbation import (
    EMPTY_FIXINGS,
    MODE_P1,
    BudgetState,
    Fixings,
    PerturbationSpec,
    candidate_pairs,
    enumerate_admissible,
)

STATUS_ROBUST = "robust"
STATUS_NONROBUST = "nonrobust"
STATUS_TIMEOUT = "timeout"

BRANCH_MAX_IMPACT = "max_impact"
BRANCH_INPUT_ORDER = "input_order"
SELECT_BEST_BOUND = "best_bound"
SELECT_DEPTH_FIRST = "depth_first"


@dataclass(frozen=True)
class SearchConfig:
    """Knobs of the decision procedure; defaults match single-worker use."""

    strategy: str = STRATEGY_ABT
    time_limit: float = 3600.0
    node_limit: int = 1_000_000_000
    branching: str = BRANCH_MAX_IMPACT
    node_selection: str = SELECT_BEST_BOUND
    seed: int = 0
    attack_restarts: int = 3
    portfolio: bool = False  # reserved; running sbt and abt side by side is not implemented

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise InconsistentInput(f"unknown strategy {self.strategy!r}")
        if self.branching not in (BRANCH_MAX_IMPACT, BRANCH_INPUT_ORDER):
            raise InconsistentInput(f"unknown branching rule {self.branching!r}")
        if self.node_selection not in (SELECT_BEST_BOUND, SELECT_DEPTH_FIRST):
            raise InconsistentInput(f"unknown node selection {self.node_selection!r}")
        if self.time_limit <= 0 or self.node_limit <= 0:
            raise InconsistentInput("limits must be positive")
        if self.portfolio:
            raise InconsistentInput("portfolio mode is reserved and not implemented")


@dataclass(frozen=True)
class BBNode:
    """One subproblem: decided entries, implied budget use, and a dual bound."""

    fixings: Fixings
    depth: int
    dual_bound: float
    budget_state: BudgetState


@dataclass(frozen=True)
class Verdict:
    status: str
    strategy: str
    nodes_explored: int
    time_seconds: float
    witness: Optional[np.ndarray] = None
    certified_bound: Optional[float] = None

    def to_report(self, config: SearchConfig, directed: bool, timing: bool = True) -> dict:
        """Report dictionary; ``timing=False`` zeroes the wall-clock field so
        reports of identical runs are byte-identical."""
        if self.witness is None:
            witness_edges = None
        else:
            us, vs = np.nonzero(self.witness)
            if directed:
                witness_edges = sorted([int(u), int(v)] for u, v in zip(us, vs))
            else:
                witness_edges = sorted(
                    [int(min(u, v)), int(max(u, v))] for u, v in zip(us, vs) if u < v
                )
        return {
            "status": self.status,
            "certified_bound": self.certified_bound,
            "witness_edges": witness_edges,
            "nodes_explored": self.nodes_explored,
            "time_seconds": self.time_seconds if timing else 0.0,
            "strategy": self.strategy,
            "config": asdict(config),
        }


def node_bound(
    model: MPNNModel,
    instance: GraphInstance,
    spec: PerturbationSpec,
    fixings: Fixings,
    strategy: str,
) -> float:
    """Sound lower bound on the margin over the node's feasible set."""
    table = propagate(model, instance, spec, strategy, fixings)
    return table.margin_lo


def _impact_scores(model: MPNNModel, instance: GraphInstance) -> np.ndarray:
    """Per-source-node first-layer impact: how much its contribution can move
    any output feature, summed over features."""
    layer = model.mp_layers[0]
    contrib = instance.features @ layer.w_neigh
    return 2.0 * np.abs(contrib).sum(axis=1)


def _pair_cost(spec: PerturbationSpec, u: int, v: int):
    """(entry cost, local columns charged) of changing pair (u, v)."""
    if spec.mode == MODE_P1:
        return 2, (u, v)
    return 1, (v,)


def _branchable_pairs(
    spec: PerturbationSpec,
    pairs: list,
    node: BBNode,
) -> list:
    decided = node.fixings.decided()
    state = node.budget_state
    spent = state.total_removed + state.total_added
    out = []
    for u, v in pairs:
        if (u, v) in decided:
            continue
        cost, cols = _pair_cost(spec, u, v)
        if spec.entry_cap() - spent < cost:
            continue
        ok = True
        for w in cols:
            if spec.local_budgets[w] - state.removed_per_node[w] - state.added_per_node[w] < 1:
                ok = False
                break
        if ok:
            out.append((u, v))
    return out


def branch(
    model: MPNNModel,
    instance: GraphInstance,
    spec: PerturbationSpec,
    node: BBNode,
    rule: str = BRANCH_MAX_IMPACT,
) -> tuple[tuple[int, int], Fixings, Fixings]:
    """Select a pair and produce the fixed-to-0 / fixed-to-1 child fixings."""
    pairs = candidate_pairs(instance.adjacency, spec)
    branchable = _branchable_pairs(spec, pairs, node)
    if not branchable:
        raise NoBranchCandidate("node has no unfixed, budget-relevant pair")
    if rule == BRANCH_INPUT_ORDER:
        pick = branchable[0]
    else:
        scores = _impact_scores(model, instance)
        if spec.mode == MODE_P1:
            key = lambda p: (-max(scores[p[0]], scores[p[1]]), p)
        else:
            key = lambda p: (-scores[p[0]], p)
        pick = min(branchable, key=key)
    undirected = spec.mode == MODE_P1
    child0 = node.fixings.with_pair(pick[0], pick[1], 0, undirected)
    child1 = node.fixings.with_pair(pick[0], pick[1], 1, undirected)
    return pick, child0, child1


def attack_search(
    model: MPNNModel,
    instance: GraphInstance,
    spec: PerturbationSpec,
    restarts: int = 3,
    seed: int = 0,
) -> Optional[np.ndarray]:
    """Greedy best-single-change descent with random restarts.

    Returns an admissible adjacency with negative margin, or ``None``.
    The first start is the unperturbed graph; later starts apply a random
    admissible change set.
    """
    validate_pair(model, instance)
    spec.validate_for(instance)
    rng = np.random.default_rng(seed)
    base = instance.adjacency
    pairs = candidate_pairs(base, spec)

    def to_matrix(changes: frozenset) -> np.ndarray:
        out = np.array(base)
        for u, v in changes:
            if spec.mode == MODE_P1:
                flipped = 1.0 - out[u, v]
                out[u, v] = flipped
                out[v, u] = flipped
            else:
                out[u, v] = 0.0
        return out

    def admissible(changes: frozenset) -> bool:
        cost = spec.flip_entry_cost() * len(changes)
        if cost > spec.entry_cap():
            return False
        counts = [0] * spec.n
        for u, v in changes:
            counts[v] += 1
            if spec.mode == MODE_P1:
                counts[u] += 1
        return all(counts[w] <= spec.local_budgets[w] for w in range(spec.n))

    def eval_margin(changes: frozenset) -> float:
        return instance_margin(model, instance, to_matrix(changes))

    for restart in range(restarts + 1):
        if restart == 0:
            changes = frozenset()
        else:
            changes = frozenset()
            for idx in rng.permutation(len(pairs)):
                p = pairs[int(idx)]
                if rng.random() < 0.5:
                    trial = changes | {p}
                    if admissible(trial):
                        changes = trial
        current = eval_margin(changes)
        if current < 0:
            return to_matrix(changes)
        while True:
            best_move, best_val = None, current
            for p in pairs:
                trial = changes - {p} if p in changes else changes | {p}
                if not admissible(trial):
                    continue
                val = eval_margin(trial)
                if val < best_val:
                    best_move, best_val = trial, val
            if best_move is None:
                break
            changes, current = best_move, best_val
            if current < 0:
                return to_matrix(changes)
    return None


def brute_force_verdict(
    model: MPNNModel,
    instance: GraphInstance,
    spec: PerturbationSpec,
    cap: int = 200_000,
) -> tuple[float, np.ndarray]:
    """Exact minimum margin and minimizer by exhaustive enumeration."""
    validate_pair(model, instance)
    spec.validate_for(instance)
    best_margin = np.inf
    best_adj = None
    for adj in enumerate_admissible(instance.adjacency, spec, cap):
        m = instance_margin(model, instance, adj)
        if m < best_margin:
            best_margin = m
            best_adj = adj
    return float(best_margin), best_adj


def verify(
    model: MPNNModel,
    instance: GraphInstance,
    spec: PerturbationSpec,
    config: Optional[SearchConfig] = None,
) -> Verdict:
    """Decide robustness of the instance over its perturbation set."""
    config = config or SearchConfig()
    validate_pair(model, instance)
    spec.validate_for(instance)
    start = time.monotonic()
    strategy = config.strategy

    def done(status, witness=None, certified=None, explored=0):
        return Verdict(
            status=status,
            strategy=strategy,
            nodes_explored=explored,
            time_seconds=time.monotonic() - start,
            witness=witness,
            certified_bound=certified,
        )

    base_margin = instance_margin(model, instance)
    if base_margin < 0:
        return done(STATUS_NONROBUST, witness=np.array(instance.adjacency))
    incumbent = attack_search(model, instance, spec, config.attack_restarts, config.seed)
    if incumbent is not None:
        return done(STATUS_NONROBUST, witness=incumbent)

    explored = 0
    fathomed_min = np.inf
    counter = 0
    heap: list = []

    def push(node: BBNode):
        nonlocal counter
        if config.node_selection == SELECT_BEST_BOUND:
            key = (node.dual_bound, counter)
        else:
            key = (-node.depth, -counter)
        counter += 1
        heapq.heappush(heap, (key, node))

    root_bound = node_bound(model, instance, spec, EMPTY_FIXINGS, strategy)
    explored += 1
    if root_bound >= 0:
        return done(STATUS_ROBUST, certified=root_bound, explored=explored)
    push(BBNode(EMPTY_FIXINGS, 0, root_bound, BudgetState.from_fixings(instance.adjacency, EMPTY_FIXINGS)))

    pairs = candidate_pairs(instance.adjacency, spec)
    while heap:
        if time.monotonic() - start > config.time_limit:
            return done(STATUS_TIMEOUT, explored=explored)
        if explored >= config.node_limit:
            return done(STATUS_TIMEOUT, explored=explored)
        (_, node) = heapq.heappop(heap)
        if node.dual_bound >= 0:
            fathomed_min = min(fathomed_min, node.dual_bound)
            if config.node_selection == SELECT_BEST_BOUND:
                # best-first: every open node is at least this good
                return done(STATUS_ROBUST, certified=float(fathomed_min), explored=explored)
            continue
        branchable = _branchable_pairs(spec, pairs, node)
        if not branchable:
            # singleton feasible set: every undecided pair is budget-forced
            # to its original value, so evaluate the margin exactly
            explored += 1
            leaf_adj = node.fixings.apply_to(instance.adjacency)
            m = instance_margin(model, instance, leaf_adj)
            if m < 0:
                return done(STATUS_NONROBUST, witness=leaf_adj, explored=explored)
            fathomed_min = min(fathomed_min, m)
            continue
        pick, child0, child1 = branch(model, instance, spec, node, config.branching)
        for child_fix in (child0, child1):
            bound = node_bound(model, instance, spec, child_fix, strategy)
            explored += 1
            if bound >= 0:
                fathomed_min = min(fathomed_min, bound)
                continue
            push(
                BBNode(
                    fixings=child_fix,
                    depth=node.depth + 1,
                    dual_bound=bound,
                    budget_state=BudgetState.from_fixings(instance.adjacency, child_fix),
                )
            )
    return done(STATUS_ROBUST, certified=float(fathomed_min), explored=explored)
