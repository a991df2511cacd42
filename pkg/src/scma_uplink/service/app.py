"""HTTP service exposing the simulator to remote (or in-process) clients."""

from __future__ import annotations

import math

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__
from ..core import (
    FactorGraph,
    build_factor_graph,
    codebook_from_json,
    codebook_to_json,
    default_codebook_set,
    pairs_to_complex,
)
from ..channel import ReceivedFrame
from ..delayest import FbOptions, diagnostics_csv, estimate_delays
from ..experiments import run_ber_experiment, run_mae_experiment, run_rip_experiment
from .schemas import (
    CodebookBuildRequest,
    CodebookDocument,
    DelayEstimateRequest,
    DelayEstimateResponse,
    DiagnosticsRowModel,
    ExperimentRequest,
    ExperimentResponse,
    HealthResponse,
    MetricRowModel,
    RipcheckRequest,
    RipcheckResponse,
    CheckRowModel,
    ValidationResponse,
)

SERVICE_NAME = "scma-uplink"


def create_app() -> FastAPI:
    app = FastAPI(title=SERVICE_NAME, version=__version__)

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", service=SERVICE_NAME, version=__version__)

    @app.post("/experiments/mae", response_model=ExperimentResponse)
    def mae(request: ExperimentRequest) -> ExperimentResponse:
        result = _guard(run_mae_experiment, request.config)
        return _experiment_response(result)

    @app.post("/experiments/ber", response_model=ExperimentResponse)
    def ber(request: ExperimentRequest) -> ExperimentResponse:
        result = _guard(run_ber_experiment, request.config)
        return _experiment_response(result)

    @app.post("/ripcheck", response_model=RipcheckResponse)
    def ripcheck(request: RipcheckRequest) -> RipcheckResponse:
        result = _guard(run_rip_experiment, request.config)
        rows = [CheckRowModel(**row.__dict__) for row in result.rows]
        return RipcheckResponse(csv=result.csv, rows=rows)

    @app.post("/codebooks", response_model=CodebookDocument)
    def build_codebooks(request: CodebookBuildRequest) -> CodebookDocument:
        def build() -> dict:
            graph = build_factor_graph(request.K, request.J, request.dv)
            return codebook_to_json(default_codebook_set(graph, request.M))

        return CodebookDocument(**_guard(build))

    @app.post("/codebooks/validate", response_model=ValidationResponse)
    def validate_codebooks(document: CodebookDocument) -> ValidationResponse:
        try:
            codebook_from_json(document.model_dump())
        except ValueError as exc:
            return ValidationResponse(valid=False, detail=str(exc))
        return ValidationResponse(valid=True, detail="ok")

    @app.post("/delays/estimate", response_model=DelayEstimateResponse)
    def estimate(request: DelayEstimateRequest) -> DelayEstimateResponse:
        def run() -> DelayEstimateResponse:
            graph = FactorGraph(np.asarray(request.occupancy))
            heads = pairs_to_complex(request.pilot_heads)
            received = ReceivedFrame(pairs_to_complex(request.received))
            solver = request.solver
            sigma = (
                solver.sigma
                if solver.sigma is not None
                else math.sqrt(request.noise_variance / 2.0)
            )
            opts = FbOptions(
                lam=solver.lam,
                sigma=sigma,
                step_scale=solver.step_scale,
                stop_tol=solver.stop_tol,
                max_iters=solver.max_iters,
            )
            profile, estimates = estimate_delays(
                received, heads, graph, request.max_delay, opts, request.method
            )
            diagnostics = [
                DiagnosticsRowModel(
                    re_index=k,
                    iterations=est.iterations,
                    final_objective=est.final_objective,
                    converged=est.converged,
                )
                for k, est in enumerate(estimates)
            ]
            return DelayEstimateResponse(
                delays=[int(d) for d in profile.delays],
                diagnostics=diagnostics,
                diagnostics_csv=diagnostics_csv(estimates),
            )

        return _guard(run)

    return app


def _guard(fn, *args):
    """Convert domain validation errors into HTTP 422 responses."""
    try:
        return fn(*args)
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


def _experiment_response(result) -> ExperimentResponse:
    rows = [MetricRowModel(**row.__dict__) for row in result.rows]
    return ExperimentResponse(csv=result.csv, rows=rows)


app = create_app()
