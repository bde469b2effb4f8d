"""Certified robustness verification of message-passing neural networks
under budgeted topological perturbations."""

from .bnb import (
    BBNode,
    SearchConfig,
    Verdict,
    attack_search,
    branch,
    brute_force_verdict,
    node_bound,
    verify,
)
from .bounds import (
    BoundsTable,
    Interval,
    abt_preact_bounds,
    aux_interval,
    basic_preact_bounds,
    contribution,
    propagate,
    relu_interval,
    sbt_preact_bounds,
)
from .errors import GnncertError
from .mip import MIPModel, check_feasible, encode, lp_text, write_lp
from .model import (
    GraphInstance,
    MPNNLayer,
    MPNNModel,
    forward,
    forward_trace,
    instance_margin,
    load_instance,
    load_model,
    margin,
)
from .perturbation import (
    BudgetState,
    Fixings,
    PerturbationSpec,
    attack_label,
    enumerate_admissible,
    extract_khop,
    is_admissible,
    load_spec,
    local_budget_from_degree,
    remaining_local_budget,
)
from .report import BenchRecord, BenchSummary, bench, sgm, summarize

__version__ = "0.1.0"
