"""Pydantic request/response models mirroring the JSON file formats."""

from __future__ import annotations

from typing import Literal, Optional, Union

from pydantic import BaseModel, Field


class LayerSchema(BaseModel):
    w_self: list[list[float]]
    w_neigh: list[list[float]]
    bias: list[float]
    activation: Literal["relu", "identity"] = "relu"


class ModelSchema(BaseModel):
    layers: list[LayerSchema]
    pooling: Literal["none", "add"] = "none"
    dense: list[LayerSchema] = Field(default_factory=list)


class NodeTarget(BaseModel):
    node: int


class GraphSchema(BaseModel):
    n: int
    directed: bool
    features: list[list[float]]
    edges: list[list[int]]
    target: Union[Literal["graph"], NodeTarget]
    label_true: int
    label_attack: int


class LocalRule(BaseModel):
    strength: int = 2


class SpecSchema(BaseModel):
    mode: Literal["p1", "p2"]
    global_budget: int
    local_budgets: Optional[list[int]] = None
    local_rule: Optional[LocalRule] = None
    tight_root_budget: bool = False


class SearchSettings(BaseModel):
    strategy: Literal["basic", "sbt", "abt"] = "abt"
    time_limit: float = 3600.0
    node_limit: int = 1_000_000_000
    branching: Literal["max_impact", "input_order"] = "max_impact"
    node_selection: Literal["best_bound", "depth_first"] = "best_bound"
    seed: int = 0
    attack_restarts: int = 3


class FixingsSchema(BaseModel):
    fixed_zero: list[list[int]] = Field(default_factory=list)
    fixed_one: list[list[int]] = Field(default_factory=list)


class VerifyRequest(BaseModel):
    model: ModelSchema
    graph: GraphSchema
    spec: SpecSchema
    config: SearchSettings = Field(default_factory=SearchSettings)
    timing: bool = True


class VerifyResponse(BaseModel):
    status: Literal["robust", "nonrobust", "timeout"]
    certified_bound: Optional[float]
    witness_edges: Optional[list[list[int]]]
    nodes_explored: int
    time_seconds: float
    strategy: str
    config: dict


class BoundsRequest(BaseModel):
    model: ModelSchema
    graph: GraphSchema
    spec: SpecSchema
    strategy: Literal["basic", "sbt", "abt"] = "sbt"
    fixings: Optional[FixingsSchema] = None


class BoundsRecord(BaseModel):
    layer: int
    node: int
    feature: int
    pre: tuple[float, float]
    post: tuple[float, float]


class BoundsResponse(BaseModel):
    strategy: str
    records: list[BoundsRecord]
    margin: tuple[float, float]


class ExportMipRequest(BaseModel):
    model: ModelSchema
    graph: GraphSchema
    spec: SpecSchema
    strategy: Literal["basic", "sbt"] = "sbt"


class ExportMipResponse(BaseModel):
    lp: str
    num_variables: int
    num_constraints: int


class AttackRequest(BaseModel):
    model: ModelSchema
    graph: GraphSchema
    spec: SpecSchema
    restarts: int = 3
    seed: int = 0


class AttackResponse(BaseModel):
    found: bool
    witness_edges: Optional[list[list[int]]]
    margin: Optional[float]


class OracleRequest(BaseModel):
    model: ModelSchema
    graph: GraphSchema
    spec: SpecSchema
    cap: int = 200_000


class OracleResponse(BaseModel):
    min_margin: float
    witness_edges: list[list[int]]


class SgmRequest(BaseModel):
    times: list[float]
    shift: float = 10.0


class SgmResponse(BaseModel):
    value: float
