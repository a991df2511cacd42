"""Request/response models for the HTTP service."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

from ..config import ExperimentConfig, RipcheckConfig, SolverConfig


class HealthResponse(BaseModel):
    status: str
    service: str
    version: str


class ExperimentRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config: ExperimentConfig


class RipcheckRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config: RipcheckConfig


class MetricRowModel(BaseModel):
    snr_db: float
    pilot_energy: float
    metric: str
    mean: float
    stderr: float
    trials: int


class ExperimentResponse(BaseModel):
    csv: str
    rows: list[MetricRowModel]


class CheckRowModel(BaseModel):
    check: str
    params: str
    empirical: float
    bound: float
    verdict: str


class RipcheckResponse(BaseModel):
    csv: str
    rows: list[CheckRowModel]


class CodebookBuildRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    K: int = 4
    J: int = 6
    M: int = 4
    dv: int = 2


class CodebookDocument(BaseModel):
    """Wire form of a codebook set; complex numbers are [re, im] pairs."""

    model_config = ConfigDict(extra="forbid")

    K: int
    J: int
    M: int
    occupancy: list[list[int]]
    codebooks: list[list[list[list[float]]]]


class ValidationResponse(BaseModel):
    valid: bool
    detail: str


class DelayEstimateRequest(BaseModel):
    """One delay-estimation call on externally supplied samples.

    ``pilot_heads`` is the nonzero pilot portion per user; ``received``
    carries, per RE, the pilot observation window (first
    ``P + max_delay`` samples).  Complex values are [re, im] pairs.
    """

    model_config = ConfigDict(extra="forbid")

    occupancy: list[list[int]]
    pilot_heads: list[list[list[float]]]
    received: list[list[list[float]]]
    max_delay: int = Field(ge=0)
    noise_variance: float = Field(default=0.0, ge=0.0)
    method: Literal["lasso", "least_squares"] = "lasso"
    solver: SolverConfig = SolverConfig()


class DiagnosticsRowModel(BaseModel):
    re_index: int
    iterations: int
    final_objective: float
    converged: bool


class DelayEstimateResponse(BaseModel):
    delays: list[int]
    diagnostics: list[DiagnosticsRowModel]
    diagnostics_csv: str
