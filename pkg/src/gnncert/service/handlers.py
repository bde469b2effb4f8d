"""Request handlers shared by the HTTP app and the in-process CLI client."""

from __future__ import annotations

import numpy as np

from .. import bnb, bounds, mip, report
from ..model import GraphInstance, MPNNModel, instance_margin
from ..perturbation import Fixings, PerturbationSpec
from . import schemas


def _core_triple(model_s, graph_s, spec_s):
    model = MPNNModel.from_dict(model_s.model_dump())
    instance = GraphInstance.from_dict(graph_s.model_dump())
    spec = PerturbationSpec.from_dict(spec_s.model_dump(), instance)
    return model, instance, spec


def _edges(matrix: np.ndarray, directed: bool):
    us, vs = np.nonzero(matrix)
    if directed:
        return sorted([int(u), int(v)] for u, v in zip(us, vs))
    return sorted([int(u), int(v)] for u, v in zip(us, vs) if u < v)


def handle_verify(req: schemas.VerifyRequest) -> schemas.VerifyResponse:
    model, instance, spec = _core_triple(req.model, req.graph, req.spec)
    config = bnb.SearchConfig(**req.config.model_dump())
    verdict = bnb.verify(model, instance, spec, config)
    return schemas.VerifyResponse(
        **verdict.to_report(config, instance.directed, timing=req.timing)
    )


def handle_bounds(req: schemas.BoundsRequest) -> schemas.BoundsResponse:
    model, instance, spec = _core_triple(req.model, req.graph, req.spec)
    fixings = None
    if req.fixings is not None:
        fixings = Fixings.from_dict(req.fixings.model_dump())
    table = bounds.propagate(model, instance, spec, req.strategy, fixings)
    return schemas.BoundsResponse(
        strategy=req.strategy,
        records=[schemas.BoundsRecord(**rec) for rec in table.records()],
        margin=(table.margin_lo, table.margin_hi),
    )


def handle_export_mip(req: schemas.ExportMipRequest) -> schemas.ExportMipResponse:
    model, instance, spec = _core_triple(req.model, req.graph, req.spec)
    table = bounds.propagate(model, instance, spec, req.strategy)
    built = mip.encode(model, instance, spec, table)
    return schemas.ExportMipResponse(
        lp=mip.lp_text(built),
        num_variables=len(built.variables),
        num_constraints=len(built.constraints),
    )


def handle_attack(req: schemas.AttackRequest) -> schemas.AttackResponse:
    model, instance, spec = _core_triple(req.model, req.graph, req.spec)
    witness = bnb.attack_search(model, instance, spec, req.restarts, req.seed)
    if witness is None:
        return schemas.AttackResponse(found=False, witness_edges=None, margin=None)
    return schemas.AttackResponse(
        found=True,
        witness_edges=_edges(witness, instance.directed),
        margin=instance_margin(model, instance, witness),
    )


def handle_oracle(req: schemas.OracleRequest) -> schemas.OracleResponse:
    model, instance, spec = _core_triple(req.model, req.graph, req.spec)
    min_margin, argmin = bnb.brute_force_verdict(model, instance, spec, req.cap)
    return schemas.OracleResponse(
        min_margin=min_margin,
        witness_edges=_edges(argmin, instance.directed),
    )


def handle_sgm(req: schemas.SgmRequest) -> schemas.SgmResponse:
    return schemas.SgmResponse(value=report.sgm(req.times, req.shift))
