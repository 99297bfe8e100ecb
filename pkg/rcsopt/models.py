"""Typed experiment configuration and the JSON documents the command line emits"""
from typing import Dict, List, Literal, Optional

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeFloat,
    NonNegativeInt,
    PositiveFloat,
    PositiveInt,
)

from rcsopt.moreau import SubregularityReport, TheoryBounds

Family = Literal["mestimator", "svm", "pr"]


class ProblemSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    family: Family
    # dataset container or libsvm file
    data: Optional[str] = None
    # generator settings used when no data file is given
    generate: Optional[Dict] = None
    loss: Literal["l1", "mcp"] = "l1"
    p: Optional[PositiveFloat] = None
    p1: Optional[PositiveFloat] = None
    p2: NonNegativeFloat = 0.0


class SolverSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    method: Literal["rcs", "subgrad"] = "rcs"
    # number of blocks N, defaults to d
    blocks: Optional[PositiveInt] = None
    schedule: Literal["sqrtlog", "qg", "horizon"] = "sqrtlog"
    delta: PositiveFloat = 1.0
    kappa3: Optional[PositiveFloat] = None
    # fixed-horizon cap; derived from kappa2 when only that is given
    cap: Optional[PositiveFloat] = None
    kappa2: Optional[PositiveFloat] = None
    seed: int = Field(0, ge=0)
    epochs: NonNegativeInt = 10
    record_every: PositiveInt = 1
    # random for pr, zero for the other families
    init: Optional[Literal["zero", "random"]] = None
    track_average_objective: bool = False


class DiagnosticsSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lam: Optional[PositiveFloat] = None
    probe_every: Optional[PositiveInt] = None
    inner_budget: PositiveInt = 5000
    inner_tolerance: PositiveFloat = 1e-8


class OutputSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    trace: Optional[str] = None
    summary: Optional[str] = None
    pgm: Optional[str] = None


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    problem: ProblemSpec
    solver: SolverSpec = SolverSpec()
    diagnostics: DiagnosticsSpec = DiagnosticsSpec()
    output: OutputSpec = OutputSpec()
    # path of a ReferenceSolution JSON
    reference: Optional[str] = None


class ReferenceProvenance(BaseModel):
    method: str
    iterations: NonNegativeInt
    seed_count: PositiveInt
    schedule: str
    tail_iterations: NonNegativeInt = 0


class ReferenceSolution(BaseModel):
    family: Family
    f_star: float
    x_ref: List[float]
    provenance: ReferenceProvenance


class RunSummary(BaseModel):
    family: Family
    method: Literal["rcs", "subgrad"]
    n: PositiveInt
    d: PositiveInt
    n_blocks: PositiveInt
    iterations: NonNegativeInt
    epochs: NonNegativeInt
    seed: NonNegativeInt
    schedule: Dict
    initial_objective: float
    final_objective: float
    best_objective: float
    weighted_average_objective: Optional[float] = None
    f_star: Optional[float] = None
    final_gap: Optional[float] = None
    reference_provenance: Optional[ReferenceProvenance] = None
    wall_time: NonNegativeFloat
    workspace_bytes_per_iter: PositiveInt
    record_count: NonNegativeInt
    envelope_gradient_norms: Optional[List[Optional[float]]] = None
    # against the planted signal, when the dataset carries one
    distance_to_truth: Optional[NonNegativeFloat] = None
    support_recovered: Optional[bool] = None
    final_x: List[float]


class SweepEntry(BaseModel):
    seed: NonNegativeInt
    final_objective: float
    final_gap: Optional[float] = None
    trace: Optional[str] = None
    summary: Optional[str] = None


class SweepSummary(BaseModel):
    family: Family
    method: Literal["rcs", "subgrad"]
    runs: List[SweepEntry]
    mean_final_objective: float
    mean_final_gap: Optional[float] = None


class EnvelopeProbe(BaseModel):
    index: NonNegativeInt
    objective: float
    envelope_value: float
    envelope_gradient_norm: NonNegativeFloat
    error_bar: NonNegativeFloat
    certified_gap: NonNegativeFloat
    point_norm: NonNegativeFloat


class DiagnosticsReport(BaseModel):
    family: Family
    lam: PositiveFloat
    rho: NonNegativeFloat
    rho_provenance: str
    probes: List[EnvelopeProbe]
    critical_set_bound: Optional[NonNegativeFloat] = None
    critical_set_note: Optional[str] = None
    within_twice_bound: Optional[List[bool]] = None
    subregularity: Optional[SubregularityReport] = None
    theory: Optional[TheoryBounds] = None
