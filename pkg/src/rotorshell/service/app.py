"""HTTP service wrapping the scenario runner."""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..scenarios import ScenarioError, describe_scenario, list_scenarios, run_scenario
from .models import (ArtifactPayload, HealthResponse, RunRequest, RunResponse,
                     ScenarioInfo, ScenarioListResponse)


def create_app() -> FastAPI:
    app = FastAPI(title="rotorshell", version=__version__)

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(version=__version__)

    @app.get("/scenarios", response_model=ScenarioListResponse)
    def scenarios():
        return ScenarioListResponse(scenarios=list_scenarios())

    @app.get("/scenarios/{name}", response_model=ScenarioInfo)
    def describe(name: str):
        try:
            return ScenarioInfo(**describe_scenario(name))
        except ScenarioError as e:
            raise HTTPException(status_code=404, detail=str(e))

    @app.post("/scenarios/run", response_model=RunResponse)
    def run(req: RunRequest):
        try:
            result = run_scenario(req.scenario, params=req.params,
                                  grid=req.grid, seed=req.seed)
        except ScenarioError as e:
            status = 404 if str(e).startswith("unknown scenario") else 422
            raise HTTPException(status_code=status, detail=str(e))
        except ValueError as e:
            raise HTTPException(status_code=422, detail=str(e))
        return RunResponse(
            scenario=result.name,
            summary=result.summary,
            artifacts=[ArtifactPayload(**a.payload()) for a in result.artifacts])

    return app


app = create_app()
