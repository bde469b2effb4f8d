"""Interval bounds for every variable of the big-M encoding.

Three strategies compute preactivation intervals per layer, node, and
feature:

* ``basic``: sound over every binary adjacency: each potential neighbor
  contributes ``min(0, lb)`` to the lower and ``max(0, ub)`` to the upper
  bound, with no budget or structure information.
* ``sbt``: starts from the original neighborhood and spends the root-level
  budget on the most harmful additions/removals (the exact optimum of the
  single-column relaxation).
* ``abt``: ``sbt`` under edge fixings: decided entries are substituted and
  the selection runs over the remaining candidates with the remaining
  budget.

The self weight and bias always enter all three strategies; only neighbor
contributions are perturbable.  All strategies share one column routine, so
nesting (``basic`` contains ``sbt`` contains ``abt``) holds by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import isfinite
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, InconsistentInput
from .model import IDENTITY, POOL_ADD, RELU, GraphInstance, MPNNLayer, MPNNModel, validate_pair
from .perturbation import (
    EMPTY_FIXINGS,
    MODE_P2,
    BudgetState,
    Fixings,
    PerturbationSpec,
    remaining_local_budget,
    validate_fixings,
)

STRATEGY_BASIC = "basic"
STRATEGY_SBT = "sbt"
STRATEGY_ABT = "abt"
STRATEGIES = (STRATEGY_BASIC, STRATEGY_SBT, STRATEGY_ABT)

# Structural accounting for the complexity contract: one logical selection
# per (node, output feature) and layer.  Single-threaded use only.
_SELECTION_CALLS = 0


def selection_calls() -> int:
    return _SELECTION_CALLS


def reset_selection_calls() -> None:
    global _SELECTION_CALLS
    _SELECTION_CALLS = 0


@dataclass(frozen=True)
class Interval:
    """A closed interval [lo, hi] with finite endpoints."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (isfinite(self.lo) and isfinite(self.hi)):
            raise InconsistentInput(f"interval endpoints must be finite: [{self.lo}, {self.hi}]")
        if self.lo > self.hi:
            raise InconsistentInput(f"empty interval [{self.lo}, {self.hi}]")

    def contains(self, x: float, tol: float = 0.0) -> bool:
        return self.lo - tol <= x <= self.hi + tol

    def subset_of(self, other: "Interval", tol: float = 0.0) -> bool:
        return self.lo >= other.lo - tol and self.hi <= other.hi + tol


def aux_interval(x: Interval) -> Interval:
    """Range of ``a * x`` over a binary gate ``a``: the hull of {0} and x."""
    return Interval(min(0.0, x.lo), max(0.0, x.hi))


def relu_interval(pre: Interval) -> Interval:
    return Interval(max(0.0, pre.lo), max(0.0, pre.hi))


def contribution(w_column, x_bounds: Sequence[Interval]) -> tuple[float, float]:
    """Bounds on ``w . x`` for one output feature when node u is a neighbor.

    Sign-split: weights >= 0 take the lower endpoint for the lower bound and
    the upper endpoint for the upper bound; negative weights swap them.
    """
    w = np.asarray(w_column, dtype=np.float64)
    if w.ndim != 1 or len(x_bounds) != w.shape[0]:
        raise DimensionMismatch(
            f"weight column of length {w.shape[0]} vs {len(x_bounds)} bounds"
        )
    lo = np.array([b.lo for b in x_bounds])
    hi = np.array([b.hi for b in x_bounds])
    wp = np.maximum(w, 0.0)
    wm = np.minimum(w, 0.0)
    return float(lo @ wp + hi @ wm), float(hi @ wp + lo @ wm)


def _contribution_rows(w: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    """Per-node contribution bounds, vectorized: rows are nodes, columns features."""
    wp = np.maximum(w, 0.0)
    wm = np.minimum(w, 0.0)
    return lo @ wp + hi @ wm, hi @ wp + lo @ wm


def _budget_shift(delta_lb: np.ndarray, delta_ub: np.ndarray, k: int):
    """Most harmful budgeted perturbation per output feature.

    Sums the ``k`` most negative entries of ``delta_lb`` (and most positive
    of ``delta_ub``) per column, ignoring entries of the helpful sign.  One
    logical selection per output feature.
    """
    global _SELECTION_CALLS
    d = delta_lb.shape[1]
    _SELECTION_CALLS += d
    if k <= 0 or delta_lb.shape[0] == 0:
        z = np.zeros(d)
        return z, z
    neg = np.minimum(np.sort(delta_lb, axis=0)[:k], 0.0).sum(axis=0)
    pos = np.maximum(np.sort(delta_ub, axis=0)[-k:], 0.0).sum(axis=0)
    return neg, pos


@dataclass
class _ColumnContext:
    """Everything the per-column routine needs besides the layer arrays."""

    strategy: str
    mode: str
    base_mask: np.ndarray  # N x N bool, original edges
    forced_one: np.ndarray  # N x N bool
    forced_zero: np.ndarray  # N x N bool
    free: np.ndarray  # N x N bool, undecided off-diagonal entries
    budgets: Optional[np.ndarray]  # per-column change budget; None for basic

    @property
    def n(self) -> int:
        return self.base_mask.shape[0]


def _make_context(
    instance: GraphInstance,
    spec: PerturbationSpec,
    strategy: str,
    fixings: Fixings,
) -> _ColumnContext:
    n = instance.n
    base_mask = instance.adjacency > 0.5
    forced_zero = np.zeros((n, n), dtype=bool)
    forced_one = np.zeros((n, n), dtype=bool)
    for u, v in fixings.fixed_zero:
        forced_zero[u, v] = True
    for u, v in fixings.fixed_one:
        forced_one[u, v] = True
    free = ~(forced_zero | forced_one)
    np.fill_diagonal(free, False)
    if strategy == STRATEGY_BASIC:
        budgets = None
    elif strategy == STRATEGY_SBT:
        cap = spec.column_change_cap()
        budgets = np.array([min(q, cap) for q in spec.local_budgets], dtype=np.int64)
    else:
        state = BudgetState.from_fixings(instance.adjacency, fixings)
        budgets = np.array(
            [remaining_local_budget(spec, state, v) for v in range(n)], dtype=np.int64
        )
    return _ColumnContext(
        strategy=strategy,
        mode=spec.mode,
        base_mask=base_mask,
        forced_one=forced_one,
        forced_zero=forced_zero,
        free=free,
        budgets=budgets,
    )


def _column_pre_bounds(
    ctx: _ColumnContext,
    v: int,
    lbc: np.ndarray,
    ubc: np.ndarray,
    self_lb: np.ndarray,
    self_ub: np.ndarray,
    bias: np.ndarray,
):
    """Preactivation bounds of one node over its admissible neighbor columns."""
    free_v = ctx.free[:, v]
    forced_v = ctx.forced_one[:, v]
    lo = self_lb + bias + lbc[forced_v].sum(axis=0)
    hi = self_ub + bias + ubc[forced_v].sum(axis=0)
    if ctx.strategy == STRATEGY_BASIC:
        lo = lo + np.minimum(lbc[free_v], 0.0).sum(axis=0)
        hi = hi + np.maximum(ubc[free_v], 0.0).sum(axis=0)
        return lo, hi
    # sbt/abt: start from the (fixings-adjusted) original neighborhood, then
    # spend the budget on the most harmful changes among free candidates.
    in_star = ctx.base_mask[:, v]
    current_free = in_star & free_v
    lo = lo + lbc[current_free].sum(axis=0)
    hi = hi + ubc[current_free].sum(axis=0)
    cand_v = free_v if ctx.mode != MODE_P2 else (free_v & in_star)
    sign = np.where(in_star[cand_v, None], -1.0, 1.0)
    neg, pos = _budget_shift(sign * lbc[cand_v], sign * ubc[cand_v], int(ctx.budgets[v]))
    return lo + neg, hi + pos


def _layer_pre_bounds(
    layer: MPNNLayer,
    prev_lo: np.ndarray,
    prev_hi: np.ndarray,
    ctx: _ColumnContext,
):
    lbc, ubc = _contribution_rows(layer.w_neigh, prev_lo, prev_hi)
    self_lb, self_ub = _contribution_rows(layer.w_self, prev_lo, prev_hi)
    n, d = lbc.shape
    pre_lo = np.empty((n, d))
    pre_hi = np.empty((n, d))
    for v in range(n):
        pre_lo[v], pre_hi[v] = _column_pre_bounds(
            ctx, v, lbc, ubc, self_lb[v], self_ub[v], layer.bias
        )
    return pre_lo, pre_hi


def _post_from_pre(layer: MPNNLayer, pre_lo, pre_hi):
    if layer.activation == RELU:
        return np.maximum(pre_lo, 0.0), np.maximum(pre_hi, 0.0)
    return pre_lo, pre_hi


def _dense_pre_bounds(layer: MPNNLayer, lo: np.ndarray, hi: np.ndarray):
    wp = np.maximum(layer.w_self, 0.0)
    wm = np.minimum(layer.w_self, 0.0)
    return lo @ wp + hi @ wm + layer.bias, hi @ wp + lo @ wm + layer.bias


@dataclass
class BoundsTable:
    """Intervals for inputs, every layer's pre/post activations, pooling,
    the dense head, and the margin objective."""

    strategy: str
    input_lo: np.ndarray
    input_hi: np.ndarray
    pre_lo: list = field(default_factory=list)
    pre_hi: list = field(default_factory=list)
    post_lo: list = field(default_factory=list)
    post_hi: list = field(default_factory=list)
    pooled_lo: Optional[np.ndarray] = None
    pooled_hi: Optional[np.ndarray] = None
    dense_pre_lo: list = field(default_factory=list)
    dense_pre_hi: list = field(default_factory=list)
    dense_post_lo: list = field(default_factory=list)
    dense_post_hi: list = field(default_factory=list)
    margin_lo: float = -np.inf
    margin_hi: float = np.inf

    @property
    def num_layers(self) -> int:
        return len(self.pre_lo)

    def source_bounds(self, layer: int):
        """Bounds of the node states feeding mp layer ``layer`` (1-based)."""
        if layer == 1:
            return self.input_lo, self.input_hi
        return self.post_lo[layer - 2], self.post_hi[layer - 2]

    def preact(self, layer: int, v: int, f: int) -> Interval:
        return Interval(self.pre_lo[layer - 1][v, f], self.pre_hi[layer - 1][v, f])

    def postact(self, layer: int, v: int, f: int) -> Interval:
        return Interval(self.post_lo[layer - 1][v, f], self.post_hi[layer - 1][v, f])

    def aux_bounds(self, layer: int, u: int):
        """Intervals of the gated copies ``A[u, v] * x_u`` feeding layer ``layer``."""
        lo, hi = self.source_bounds(layer)
        return np.minimum(lo[u], 0.0), np.maximum(hi[u], 0.0)

    def margin_interval(self) -> Interval:
        return Interval(self.margin_lo, self.margin_hi)

    def records(self) -> Iterator[dict]:
        """Per (layer, node, feature) record with pre and post intervals."""
        for li in range(self.num_layers):
            n, d = self.pre_lo[li].shape
            for v in range(n):
                for f in range(d):
                    yield {
                        "layer": li + 1,
                        "node": v,
                        "feature": f,
                        "pre": [float(self.pre_lo[li][v, f]), float(self.pre_hi[li][v, f])],
                        "post": [float(self.post_lo[li][v, f]), float(self.post_hi[li][v, f])],
                    }


def _combined_margin_layer(layer: MPNNLayer, c_star: int, c: int) -> MPNNLayer:
    """Single-output layer computing the class difference directly."""
    return MPNNLayer(
        w_self=(layer.w_self[:, c_star] - layer.w_self[:, c])[:, None],
        w_neigh=(layer.w_neigh[:, c_star] - layer.w_neigh[:, c])[:, None],
        bias=np.array([layer.bias[c_star] - layer.bias[c]]),
        activation=IDENTITY,
    )


def _margin_bounds(
    model: MPNNModel,
    instance: GraphInstance,
    ctx: _ColumnContext,
    table: BoundsTable,
) -> tuple[float, float]:
    """Interval of the objective, folding the class difference into the final
    linear stage so the two class outputs are not bounded independently."""
    c_star, c = instance.label_true, instance.label_attack
    if model.dense:
        last = model.dense[-1]
        if len(model.dense) == 1:
            lo, hi = table.pooled_lo, table.pooled_hi
        else:
            lo, hi = table.dense_post_lo[-2], table.dense_post_hi[-2]
        if last.activation == IDENTITY:
            merged = _combined_margin_layer(last, c_star, c)
            mlo, mhi = _dense_pre_bounds(merged, lo, hi)
            return float(mlo[0]), float(mhi[0])
        plo, phi = table.dense_post_lo[-1], table.dense_post_hi[-1]
        return float(plo[c_star] - phi[c]), float(phi[c_star] - plo[c])

    last = model.mp_layers[-1]
    src_lo, src_hi = table.source_bounds(model.num_mp_layers)
    if last.activation == IDENTITY:
        merged = _combined_margin_layer(last, c_star, c)
        mlo, mhi = _layer_pre_bounds(merged, src_lo, src_hi, ctx)
        if instance.is_node_task:
            t = instance.target_node
            return float(mlo[t, 0]), float(mhi[t, 0])
        return float(mlo[:, 0].sum()), float(mhi[:, 0].sum())
    plo, phi = table.post_lo[-1], table.post_hi[-1]
    if instance.is_node_task:
        t = instance.target_node
        return float(plo[t, c_star] - phi[t, c]), float(phi[t, c_star] - plo[t, c])
    return float(table.pooled_lo[c_star] - table.pooled_hi[c]), float(
        table.pooled_hi[c_star] - table.pooled_lo[c]
    )


def propagate(
    model: MPNNModel,
    instance: GraphInstance,
    spec: PerturbationSpec,
    strategy: str,
    fixings: Optional[Fixings] = None,
    input_box=None,
) -> BoundsTable:
    """Layer-by-layer interval propagation under the chosen strategy.

    ``fixings`` restricts the adjacency domain; with ``basic``/``sbt`` the
    fixed entries are substituted but budgets stay at their root values,
    while ``abt`` also recomputes the per-column remaining budget.
    ``input_box`` optionally widens the input features to (lo, hi) arrays;
    the default is the degenerate box at the instance features.
    """
    if strategy not in STRATEGIES:
        raise InconsistentInput(f"unknown strategy {strategy!r}")
    validate_pair(model, instance)
    spec.validate_for(instance)
    fixings = EMPTY_FIXINGS if fixings is None else fixings
    validate_fixings(instance.adjacency, spec, fixings)
    ctx = _make_context(instance, spec, strategy, fixings)

    if input_box is None:
        in_lo = np.array(instance.features)
        in_hi = np.array(instance.features)
    else:
        in_lo = np.asarray(input_box[0], dtype=np.float64)
        in_hi = np.asarray(input_box[1], dtype=np.float64)
        if in_lo.shape != instance.features.shape or in_hi.shape != instance.features.shape:
            raise DimensionMismatch("input box must match the feature matrix shape")
        if np.any(in_lo > in_hi):
            raise InconsistentInput("input box has lo > hi")

    table = BoundsTable(strategy=strategy, input_lo=in_lo, input_hi=in_hi)
    lo, hi = in_lo, in_hi
    for layer in model.mp_layers:
        pre_lo, pre_hi = _layer_pre_bounds(layer, lo, hi, ctx)
        post_lo, post_hi = _post_from_pre(layer, pre_lo, pre_hi)
        table.pre_lo.append(pre_lo)
        table.pre_hi.append(pre_hi)
        table.post_lo.append(post_lo)
        table.post_hi.append(post_hi)
        lo, hi = post_lo, post_hi

    if model.pooling == POOL_ADD:
        table.pooled_lo = lo.sum(axis=0)
        table.pooled_hi = hi.sum(axis=0)
        vlo, vhi = table.pooled_lo, table.pooled_hi
        for layer in model.dense:
            dpre_lo, dpre_hi = _dense_pre_bounds(layer, vlo, vhi)
            dpost_lo, dpost_hi = _post_from_pre(layer, dpre_lo, dpre_hi)
            table.dense_pre_lo.append(dpre_lo)
            table.dense_pre_hi.append(dpre_hi)
            table.dense_post_lo.append(dpost_lo)
            table.dense_post_hi.append(dpost_hi)
            vlo, vhi = dpost_lo, dpost_hi

    table.margin_lo, table.margin_hi = _margin_bounds(model, instance, ctx, table)
    return table


def _single_pre_interval(
    layer: MPNNLayer,
    v: int,
    f_prime: int,
    prev_bounds,
    instance: GraphInstance,
    spec: PerturbationSpec,
    strategy: str,
    fixings: Fixings,
) -> Interval:
    prev_lo = np.asarray(prev_bounds[0], dtype=np.float64)
    prev_hi = np.asarray(prev_bounds[1], dtype=np.float64)
    validate_fixings(instance.adjacency, spec, fixings)
    ctx = _make_context(instance, spec, strategy, fixings)
    lbc, ubc = _contribution_rows(layer.w_neigh[:, [f_prime]], prev_lo, prev_hi)
    self_lb, self_ub = _contribution_rows(layer.w_self[:, [f_prime]], prev_lo, prev_hi)
    lo, hi = _column_pre_bounds(
        ctx, v, lbc, ubc, self_lb[v], self_ub[v], layer.bias[[f_prime]]
    )
    return Interval(float(lo[0]), float(hi[0]))


def basic_preact_bounds(
    layer: MPNNLayer,
    v: int,
    f_prime: int,
    prev_bounds,
    instance: GraphInstance,
    spec: PerturbationSpec,
) -> Interval:
    """Sound preactivation interval over all binary adjacencies."""
    return _single_pre_interval(
        layer, v, f_prime, prev_bounds, instance, spec, STRATEGY_BASIC, EMPTY_FIXINGS
    )


def sbt_preact_bounds(
    layer: MPNNLayer,
    v: int,
    f_prime: int,
    prev_bounds,
    instance: GraphInstance,
    spec: PerturbationSpec,
) -> Interval:
    """Budget-aware preactivation interval at the root (no fixings)."""
    return _single_pre_interval(
        layer, v, f_prime, prev_bounds, instance, spec, STRATEGY_SBT, EMPTY_FIXINGS
    )


def abt_preact_bounds(
    layer: MPNNLayer,
    v: int,
    f_prime: int,
    prev_bounds,
    instance: GraphInstance,
    spec: PerturbationSpec,
    fixings: Fixings,
) -> Interval:
    """Preactivation interval under fixings with the remaining budget."""
    return _single_pre_interval(
        layer, v, f_prime, prev_bounds, instance, spec, STRATEGY_ABT, fixings
    )
