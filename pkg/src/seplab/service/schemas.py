"""Request and response models for the HTTP service.

Requests are full experiment configs (the same schema the CLI reads from
disk); responses carry summaries plus tabular payloads that clients write out
as CSV. Floats serialize via JSON repr, which round-trips exactly.
"""

from __future__ import annotations

from typing import Optional, Union

from pydantic import BaseModel

from ..config import ExperimentConfig  # noqa: F401  (request body model)

Cell = Union[float, int, str]


class Table(BaseModel):
    columns: list[str]
    rows: list[list[Cell]]


class SteadySummary(BaseModel):
    residual: float
    iterations: int
    mass_defect: float
    min_rho: float


class SteadyResponse(BaseModel):
    summary: SteadySummary
    fields: Table


class RunSummary(BaseModel):
    n_steps: int
    n_cfl_clamps: int
    n_halvings: int
    final_combined: float
    seed: int


class RunResponse(BaseModel):
    summary: RunSummary
    trajectory: Table


class DecayFitModel(BaseModel):
    m: int
    alpha_hat: float
    log_C: float
    r2: Optional[float]
    window: list[float]
    source: str
    degenerate: bool


class ChebyshevModel(BaseModel):
    threshold: float
    m: int
    empirical: float
    bound: float
    stderr: float
    passed: bool


class EnsembleSummary(BaseModel):
    trajectories: int
    master_seed: int
    workers: int
    median_sup: float
    chebyshev: Optional[ChebyshevModel]


class EnsembleResponse(BaseModel):
    summary: EnsembleSummary
    moments: Table
    moments_pointwise: Table
    fits: list[DecayFitModel]


class MeasureSummary(BaseModel):
    psi: str
    t_end: float
    seed: int
    n_steps: int


class MeasureResponse(BaseModel):
    summary: MeasureSummary
    averages: Table


class HealthResponse(BaseModel):
    status: str
    version: str
