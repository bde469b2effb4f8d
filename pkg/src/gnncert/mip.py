"""Big-M mixed-integer encoding of the verification problem and LP export.

The feasible set is every admissible adjacency lifted through the network:
binary edge variables gate copies of the source node states via four big-M
rows per copy, ReLU units get the standard four-row big-M disjunction with a
binary on/off indicator, and the perturbation budgets become linear rows
over the edge variables.  All big-M constants come from a
:class:`~gnncert.bounds.BoundsTable`; the encoder never derives bounds
itself.

Variable naming is canonical and deterministic:

======================  =======================
adjacency               ``A_u_v``
input feature           ``x_0_v_f``
gated copy (aux)        ``ax_l_u_v_f``
preactivation           ``xb_l_v_f``
postactivation          ``x_l_v_f``
ReLU indicator          ``s_l_v_f``
pooled representation   ``p_f``
dense pre/post/sigma    ``db_h_f`` / ``d_h_f`` / ``ds_h_f``
======================  =======================
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .bounds import BoundsTable
from .errors import (
    InconsistentInput,
    InfiniteBound,
    MissingVariable,
    UnboundedVariable,
)
from .model import (
    RELU,
    GraphInstance,
    MPNNModel,
    forward_trace,
    validate_pair,
)
from .perturbation import MODE_P1, PerturbationSpec

SENSE_LE = "<="
SENSE_GE = ">="
SENSE_EQ = "="


@dataclass(frozen=True)
class VarRef:
    """A typed, canonically named variable of the encoding."""

    kind: str
    index: tuple

    @property
    def name(self) -> str:
        return f"{_KIND_PREFIX[self.kind]}_" + "_".join(str(i) for i in self.index)


_KIND_PREFIX = {
    "adjacency": "A",
    "feature": "x_0",
    "aux": "ax",
    "preact": "xb",
    "postact": "x",
    "relu_indicator": "s",
    "pooled": "p",
    "dense_pre": "db",
    "dense_post": "d",
    "dense_indicator": "ds",
}


def adj_var(u: int, v: int) -> VarRef:
    return VarRef("adjacency", (u, v))


def feature_var(v: int, f: int) -> VarRef:
    return VarRef("feature", (v, f))


def aux_var(layer: int, u: int, v: int, f: int) -> VarRef:
    return VarRef("aux", (layer, u, v, f))


def preact_var(layer: int, v: int, f: int) -> VarRef:
    return VarRef("preact", (layer, v, f))


def postact_var(layer: int, v: int, f: int) -> VarRef:
    return VarRef("postact", (layer, v, f))


def indicator_var(layer: int, v: int, f: int) -> VarRef:
    return VarRef("relu_indicator", (layer, v, f))


@dataclass(frozen=True)
class Variable:
    ref: VarRef
    lo: float
    hi: float
    binary: bool = False

    @property
    def name(self) -> str:
        return self.ref.name


@dataclass(frozen=True)
class LinearConstraint:
    """``sum(coef * var) sense rhs`` with a provenance tag."""

    terms: tuple[tuple[float, VarRef], ...]
    sense: str
    rhs: float
    tag: str

    def __post_init__(self):
        if self.sense not in (SENSE_LE, SENSE_GE, SENSE_EQ):
            raise InconsistentInput(f"unknown sense {self.sense!r}")
        for coef, _ in self.terms:
            if not math.isfinite(coef):
                raise InfiniteBound("constraint coefficient is not finite")
        if not math.isfinite(self.rhs):
            raise InfiniteBound("constraint rhs is not finite")


@dataclass
class MIPModel:
    """Variables, constraints, and a linear minimization objective."""

    variables: dict = field(default_factory=dict)  # name -> Variable
    constraints: list = field(default_factory=list)
    objective: tuple[tuple[float, VarRef], ...] = ()

    def add_variable(self, ref: VarRef, lo: float, hi: float, binary: bool = False) -> VarRef:
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise InfiniteBound(f"variable {ref.name} has non-finite bounds [{lo}, {hi}]")
        if ref.name in self.variables:
            raise InconsistentInput(f"duplicate variable {ref.name}")
        self.variables[ref.name] = Variable(ref=ref, lo=lo, hi=hi, binary=binary)
        return ref

    def add_constraint(self, terms, sense: str, rhs: float, tag: str) -> None:
        kept = tuple((float(c), r) for c, r in terms if c != 0.0)
        for _, ref in kept:
            if ref.name not in self.variables:
                raise MissingVariable(f"constraint references undeclared {ref.name}")
        self.constraints.append(LinearConstraint(terms=kept, sense=sense, rhs=float(rhs), tag=tag))

    def set_objective(self, terms) -> None:
        self.objective = tuple((float(c), r) for c, r in terms if c != 0.0)
        for _, ref in self.objective:
            if ref.name not in self.variables:
                raise MissingVariable(f"objective references undeclared {ref.name}")

    def binary_names(self) -> list[str]:
        return sorted(n for n, var in self.variables.items() if var.binary)

    def constraint_counts(self) -> dict:
        counts: dict = {}
        for con in self.constraints:
            counts[con.tag] = counts.get(con.tag, 0) + 1
        return counts

    def variable_counts(self) -> dict:
        counts: dict = {}
        for var in self.variables.values():
            counts[var.ref.kind] = counts.get(var.ref.kind, 0) + 1
        return counts


class _Encoder:
    def __init__(self, model: MPNNModel, instance: GraphInstance, spec: PerturbationSpec,
                 bounds: BoundsTable):
        self.model = model
        self.instance = instance
        self.spec = spec
        self.bounds = bounds
        self.mip = MIPModel()
        n = instance.n
        if spec.mode == MODE_P1:
            self.pairs = [(u, v) for u in range(n) for v in range(n) if u != v]
        else:
            self.pairs = [(int(u), int(v)) for u, v in zip(*np.nonzero(instance.adjacency))]
            self.pairs.sort()

    def _check_table(self) -> None:
        b = self.bounds
        if b.num_layers != self.model.num_mp_layers:
            raise UnboundedVariable("bounds table does not cover every layer")
        if b.input_lo.shape != self.instance.features.shape:
            raise UnboundedVariable("bounds table input box does not match the instance")
        for li, layer in enumerate(self.model.mp_layers):
            if b.pre_lo[li].shape != (self.instance.n, layer.d_out):
                raise UnboundedVariable(f"bounds table layer {li + 1} has the wrong shape")
        if self.model.dense and len(b.dense_pre_lo) != len(self.model.dense):
            raise UnboundedVariable("bounds table does not cover the dense head")

    def build(self) -> MIPModel:
        self._check_table()
        self._adjacency_block()
        self._feature_block()
        out_vars = self._mp_block()
        obj_vars = self._head_block(out_vars)
        self._budget_block()
        c_star, c = self.instance.label_true, self.instance.label_attack
        self.mip.set_objective([(1.0, obj_vars(c_star)), (-1.0, obj_vars(c))])
        return self.mip

    def _adjacency_block(self) -> None:
        for u, v in self.pairs:
            self.mip.add_variable(adj_var(u, v), 0.0, 1.0, binary=True)
        if self.spec.mode == MODE_P1:
            n = self.instance.n
            for u in range(n):
                for v in range(u + 1, n):
                    self.mip.add_constraint(
                        [(1.0, adj_var(u, v)), (-1.0, adj_var(v, u))], SENSE_EQ, 0.0, "sym"
                    )

    def _feature_block(self) -> None:
        n, d0 = self.instance.features.shape
        for v in range(n):
            for f in range(d0):
                self.mip.add_variable(
                    feature_var(v, f),
                    float(self.bounds.input_lo[v, f]),
                    float(self.bounds.input_hi[v, f]),
                )

    def _source_vars(self, layer: int):
        """Output variables of the stage feeding mp layer ``layer`` (1-based)."""
        if layer == 1:
            return lambda v, f: feature_var(v, f)
        prev = self.model.mp_layers[layer - 2]
        if prev.activation == RELU:
            return lambda v, f: postact_var(layer - 1, v, f)
        return lambda v, f: preact_var(layer - 1, v, f)

    def _mp_block(self):
        n = self.instance.n
        for li, layer in enumerate(self.model.mp_layers, start=1):
            src = self._source_vars(li)
            src_lo, src_hi = self.bounds.source_bounds(li)
            for v in range(n):
                for f in range(layer.d_out):
                    self.mip.add_variable(
                        preact_var(li, v, f),
                        float(self.bounds.pre_lo[li - 1][v, f]),
                        float(self.bounds.pre_hi[li - 1][v, f]),
                    )
            for u, v in self.pairs:
                for f in range(layer.d_in):
                    lb_u = float(src_lo[u, f])
                    ub_u = float(src_hi[u, f])
                    ax = self.mip.add_variable(
                        aux_var(li, u, v, f), min(0.0, lb_u), max(0.0, ub_u)
                    )
                    a = adj_var(u, v)
                    x_u = src(u, f)
                    self.mip.add_constraint([(1.0, ax), (-lb_u, a)], SENSE_GE, 0.0, "aux")
                    self.mip.add_constraint([(1.0, ax), (-ub_u, a)], SENSE_LE, 0.0, "aux")
                    self.mip.add_constraint(
                        [(1.0, ax), (-1.0, x_u), (-lb_u, a)], SENSE_LE, -lb_u, "aux"
                    )
                    self.mip.add_constraint(
                        [(1.0, ax), (-1.0, x_u), (-ub_u, a)], SENSE_GE, -ub_u, "aux"
                    )
            incoming: dict = {v: [] for v in range(n)}
            for u, v in self.pairs:
                incoming[v].append(u)
            for v in range(n):
                for fp in range(layer.d_out):
                    terms = [(1.0, preact_var(li, v, fp))]
                    for u in incoming[v]:
                        for f in range(layer.d_in):
                            terms.append((-float(layer.w_neigh[f, fp]), aux_var(li, u, v, f)))
                    for f in range(layer.d_in):
                        terms.append((-float(layer.w_self[f, fp]), src(v, f)))
                    self.mip.add_constraint(terms, SENSE_EQ, float(layer.bias[fp]), "lay")
            if layer.activation == RELU:
                self._relu_block(
                    layer_tag="relu",
                    pre=lambda v, f, li=li: preact_var(li, v, f),
                    post=lambda v, f, li=li: postact_var(li, v, f),
                    sigma=lambda v, f, li=li: indicator_var(li, v, f),
                    pre_lo=self.bounds.pre_lo[li - 1],
                    pre_hi=self.bounds.pre_hi[li - 1],
                    post_lo=self.bounds.post_lo[li - 1],
                    post_hi=self.bounds.post_hi[li - 1],
                    rows=[(v, f) for v in range(n) for f in range(layer.d_out)],
                )
        last = self.model.mp_layers[-1]
        li = self.model.num_mp_layers
        if last.activation == RELU:
            return lambda v, f: postact_var(li, v, f)
        return lambda v, f: preact_var(li, v, f)

    def _relu_block(self, layer_tag, pre, post, sigma, pre_lo, pre_hi, post_lo, post_hi, rows):
        """Four-row big-M per unstable unit; stable units collapse to equalities."""
        pre_lo = np.atleast_2d(pre_lo)
        pre_hi = np.atleast_2d(pre_hi)
        post_lo = np.atleast_2d(post_lo)
        post_hi = np.atleast_2d(post_hi)
        for v, f in rows:
            lb = float(pre_lo[v, f])
            ub = float(pre_hi[v, f])
            plo = float(post_lo[v, f])
            phi = float(post_hi[v, f])
            x = self.mip.add_variable(post(v, f), plo, phi)
            xb = pre(v, f)
            if lb >= 0.0:
                self.mip.add_constraint([(1.0, x), (-1.0, xb)], SENSE_EQ, 0.0, layer_tag)
                continue
            if ub <= 0.0:
                self.mip.add_constraint([(1.0, x)], SENSE_EQ, 0.0, layer_tag)
                continue
            s = self.mip.add_variable(sigma(v, f), 0.0, 1.0, binary=True)
            self.mip.add_constraint([(1.0, x)], SENSE_GE, 0.0, layer_tag)
            self.mip.add_constraint([(1.0, x), (-1.0, xb)], SENSE_GE, 0.0, layer_tag)
            self.mip.add_constraint(
                [(1.0, x), (-1.0, xb), (-lb, s)], SENSE_LE, -lb, layer_tag
            )
            self.mip.add_constraint([(1.0, x), (-ub, s)], SENSE_LE, 0.0, layer_tag)

    def _head_block(self, out_vars):
        model, n = self.model, self.instance.n
        if self.instance.is_node_task:
            t = self.instance.target_node
            return lambda c: out_vars(t, c)
        d_out = model.mp_layers[-1].d_out
        for f in range(d_out):
            self.mip.add_variable(
                VarRef("pooled", (f,)),
                float(self.bounds.pooled_lo[f]),
                float(self.bounds.pooled_hi[f]),
            )
        for f in range(d_out):
            terms = [(1.0, VarRef("pooled", (f,)))]
            terms += [(-1.0, out_vars(v, f)) for v in range(n)]
            self.mip.add_constraint(terms, SENSE_EQ, 0.0, "pool")
        prev = lambda f: VarRef("pooled", (f,))
        for hi_, layer in enumerate(model.dense):
            for f in range(layer.d_out):
                self.mip.add_variable(
                    VarRef("dense_pre", (hi_, f)),
                    float(self.bounds.dense_pre_lo[hi_][f]),
                    float(self.bounds.dense_pre_hi[hi_][f]),
                )
            for fp in range(layer.d_out):
                terms = [(1.0, VarRef("dense_pre", (hi_, fp)))]
                for f in range(layer.d_in):
                    terms.append((-float(layer.w_self[f, fp]), prev(f)))
                self.mip.add_constraint(terms, SENSE_EQ, float(layer.bias[fp]), "dense")
            if layer.activation == RELU:
                self._relu_block(
                    layer_tag="dense",
                    pre=lambda v, f, hi_=hi_: VarRef("dense_pre", (hi_, f)),
                    post=lambda v, f, hi_=hi_: VarRef("dense_post", (hi_, f)),
                    sigma=lambda v, f, hi_=hi_: VarRef("dense_indicator", (hi_, f)),
                    pre_lo=self.bounds.dense_pre_lo[hi_],
                    pre_hi=self.bounds.dense_pre_hi[hi_],
                    post_lo=self.bounds.dense_post_lo[hi_],
                    post_hi=self.bounds.dense_post_hi[hi_],
                    rows=[(0, f) for f in range(layer.d_out)],
                )
                prev = lambda f, hi_=hi_: VarRef("dense_post", (hi_, f))
            else:
                prev = lambda f, hi_=hi_: VarRef("dense_pre", (hi_, f))
        return prev

    def _budget_block(self) -> None:
        base = self.instance.adjacency
        q = self.spec.local_budgets
        terms = []
        existing = 0
        for u, v in self.pairs:
            if base[u, v] > 0.5:
                terms.append((-1.0, adj_var(u, v)))
                existing += 1
            else:
                terms.append((1.0, adj_var(u, v)))
        self.mip.add_constraint(
            terms, SENSE_LE, self.spec.entry_cap() - existing, "budget_glob"
        )
        by_col: dict = {}
        for u, v in self.pairs:
            by_col.setdefault(v, []).append(u)
        for v in sorted(by_col):
            terms = []
            existing = 0
            for u in by_col[v]:
                if base[u, v] > 0.5:
                    terms.append((-1.0, adj_var(u, v)))
                    existing += 1
                else:
                    terms.append((1.0, adj_var(u, v)))
            self.mip.add_constraint(terms, SENSE_LE, q[v] - existing, "budget_loc")


def encode(
    model: MPNNModel,
    instance: GraphInstance,
    spec: PerturbationSpec,
    bounds: BoundsTable,
) -> MIPModel:
    """Build the verification MIP; its optimum is the worst-case margin."""
    validate_pair(model, instance)
    spec.validate_for(instance)
    return _Encoder(model, instance, spec, bounds).build()


def _normalize_assignment(assignment: Mapping) -> dict:
    out = {}
    for key, val in assignment.items():
        name = key.name if isinstance(key, VarRef) else str(key)
        out[name] = float(val)
    return out


def check_feasible(mip: MIPModel, assignment: Mapping, tol: float = 1e-6) -> bool:
    """Whether the assignment satisfies bounds, rows, and integrality within tol."""
    values = _normalize_assignment(assignment)
    for name, var in mip.variables.items():
        if name not in values:
            raise MissingVariable(f"assignment misses {name}")
        x = values[name]
        if x < var.lo - tol or x > var.hi + tol:
            return False
        if var.binary and abs(x - round(x)) > tol:
            return False
    for con in mip.constraints:
        lhs = sum(coef * values[ref.name] for coef, ref in con.terms)
        if con.sense == SENSE_LE and lhs > con.rhs + tol:
            return False
        if con.sense == SENSE_GE and lhs < con.rhs - tol:
            return False
        if con.sense == SENSE_EQ and abs(lhs - con.rhs) > tol:
            return False
    return True


def objective_value(mip: MIPModel, assignment: Mapping) -> float:
    values = _normalize_assignment(assignment)
    return sum(coef * values[ref.name] for coef, ref in mip.objective)


def assignment_from_forward(
    mip: MIPModel,
    model: MPNNModel,
    instance: GraphInstance,
    adjacency,
) -> dict:
    """The assignment induced by exact forward evaluation at one adjacency.

    Gated copies take ``A[u, v] * x_u`` and ReLU indicators the sign of the
    preactivation (off at exactly zero).
    """
    adj = np.asarray(adjacency, dtype=np.float64)
    trace = forward_trace(model, instance.features, adj)
    sources = [np.asarray(instance.features)]
    for layer, post, pre in zip(model.mp_layers, trace.postacts, trace.preacts):
        sources.append(post if layer.activation == RELU else pre)
    values: dict = {}
    for name, var in mip.variables.items():
        kind, idx = var.ref.kind, var.ref.index
        if kind == "adjacency":
            values[name] = float(adj[idx[0], idx[1]])
        elif kind == "feature":
            values[name] = float(instance.features[idx[0], idx[1]])
        elif kind == "aux":
            li, u, v, f = idx
            values[name] = float(adj[u, v] * sources[li - 1][u, f])
        elif kind == "preact":
            li, v, f = idx
            values[name] = float(trace.preacts[li - 1][v, f])
        elif kind == "postact":
            li, v, f = idx
            values[name] = float(trace.postacts[li - 1][v, f])
        elif kind == "relu_indicator":
            li, v, f = idx
            values[name] = 1.0 if trace.preacts[li - 1][v, f] > 0.0 else 0.0
        elif kind == "pooled":
            values[name] = float(trace.pooled[idx[0]])
        elif kind == "dense_pre":
            values[name] = float(trace.dense_preacts[idx[0]][idx[1]])
        elif kind == "dense_post":
            values[name] = float(trace.dense_postacts[idx[0]][idx[1]])
        elif kind == "dense_indicator":
            values[name] = 1.0 if trace.dense_preacts[idx[0]][idx[1]] > 0.0 else 0.0
        else:
            raise InconsistentInput(f"unknown variable kind {kind!r}")
    return values


def _fmt(x: float) -> str:
    return repr(float(x))


def _format_terms(terms) -> list[str]:
    parts = []
    for i, (coef, ref) in enumerate(terms):
        sign = "-" if coef < 0 else "+"
        mag = _fmt(abs(coef))
        if i == 0:
            parts.append(f"{mag} {ref.name}" if coef >= 0 else f"- {mag} {ref.name}")
        else:
            parts.append(f"{sign} {mag} {ref.name}")
    return parts


def _wrap(first: str, parts: list[str], per_line: int = 10) -> list[str]:
    if not parts:
        return [first]
    lines = []
    for i in range(0, len(parts), per_line):
        chunk = " ".join(parts[i : i + per_line])
        lines.append(f"{first} {chunk}" if i == 0 else f"   {chunk}")
    return lines


def lp_text(mip: MIPModel) -> str:
    """CPLEX-LP text with a fully deterministic layout.

    Variables sort by canonical name, constraints by (tag, emission index);
    row names are ``tag_i``.
    """
    lines = ["Minimize"]
    lines.extend(_wrap(" obj:", _format_terms(mip.objective)))
    lines.append("Subject To")
    indexed: dict = {}
    ordered = []
    for con in mip.constraints:
        idx = indexed.get(con.tag, 0)
        indexed[con.tag] = idx + 1
        ordered.append((con.tag, idx, con))
    ordered.sort(key=lambda item: (item[0], item[1]))
    for tag, idx, con in ordered:
        parts = _format_terms(con.terms)
        parts.append(con.sense)
        parts.append(_fmt(con.rhs))
        lines.extend(_wrap(f" {tag}_{idx}:", parts))
    lines.append("Bounds")
    for name in sorted(mip.variables):
        var = mip.variables[name]
        if not var.binary:
            lines.append(f" {_fmt(var.lo)} <= {name} <= {_fmt(var.hi)}")
    lines.append("Binaries")
    binaries = mip.binary_names()
    for i in range(0, len(binaries), 8):
        lines.append(" " + " ".join(binaries[i : i + 8]))
    lines.append("End")
    return "\n".join(lines) + "\n"


def write_lp(mip: MIPModel, path) -> None:
    """Write :func:`lp_text` to ``path``."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(lp_text(mip))
