"""FastAPI service wrapping the simulation library.

The CLI drives this app in process by default; `uvicorn
isd_bandits.service.app:app` serves the same API over the network.
"""

from __future__ import annotations

import os

from fastapi import FastAPI, HTTPException

from .. import __version__, figures, harness, policies
from ..errors import ConfigError, InvalidInputError, NumericalError
from .schemas import (
    AggregateRow,
    ExperimentConfigModel,
    FailureModel,
    FigureInfo,
    HealthResponse,
    InvariantRadiusRequest,
    RadiusResponse,
    ResidualRadiusRequest,
    RunRequest,
    RunResponse,
)


def config_model_to_dict(model: ExperimentConfigModel) -> dict:
    doc = model.model_dump(exclude_none=True)
    sweep = doc.pop("sweep", None)
    if sweep is not None:
        values = sweep["values"]
        if sweep["param"] != "noise_sigma":
            values = [int(v) for v in values]
        doc["sweep"] = {"param": sweep["param"], "values": values}
    return doc


def config_model_from_config(config: harness.ExperimentConfig) -> ExperimentConfigModel:
    return ExperimentConfigModel.model_validate(harness.config_to_dict(config))


def create_app() -> FastAPI:
    app = FastAPI(title="isd-bandits", version=__version__)

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.get("/figures", response_model=list[FigureInfo])
    def list_figures() -> list[FigureInfo]:
        return [FigureInfo(fig_id=f, description=figures.describe(f))
                for f in figures.figure_ids()]

    @app.get("/figures/{fig_id}/config", response_model=ExperimentConfigModel)
    def figure_config(fig_id: str) -> ExperimentConfigModel:
        try:
            return config_model_from_config(figures.figure_config(fig_id))
        except ConfigError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    @app.post("/experiments/run", response_model=RunResponse)
    def run_experiment(request: RunRequest) -> RunResponse:
        try:
            config = harness.config_from_dict(config_model_to_dict(request.config))
            result = harness.run_grid(config)
        except ConfigError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except (InvalidInputError, NumericalError) as exc:
            raise HTTPException(status_code=500, detail=str(exc)) from exc
        if not result.traces:
            raise HTTPException(status_code=500, detail="all grid cells failed")
        paths = []
        if request.out_dir:
            os.makedirs(request.out_dir, exist_ok=True)
            suffix = "csv" if request.format == "csv" else "json"
            path = os.path.join(request.out_dir, f"{config.experiment}.{suffix}")
            rows = harness.export(result, path, request.format)
            paths.append(path)
        else:
            rows = sum(len(t.inst_regret) for t in result.traces)
        records = list(harness.trace_rows(result)) if request.include_records else None
        return RunResponse(
            status="ok" if result.ok else "partial",
            rows=rows,
            paths=paths,
            failures=[FailureModel(sweep_value=f.sweep_value, repetition=f.repetition,
                                   policy_id=f.policy_id, message=f.message)
                      for f in result.failures],
            aggregates=[AggregateRow(**row) for row in harness.aggregate_result(result)],
            records=records,
        )

    @app.post("/radii/inv", response_model=RadiusResponse)
    def invariant_radius(request: InvariantRadiusRequest) -> RadiusResponse:
        try:
            return RadiusResponse(radius=policies.rho_inv(**request.model_dump()))
        except InvalidInputError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    @app.post("/radii/res", response_model=RadiusResponse)
    def residual_radius(request: ResidualRadiusRequest) -> RadiusResponse:
        try:
            return RadiusResponse(radius=policies.rho_res(**request.model_dump()))
        except InvalidInputError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    return app


app = create_app()
