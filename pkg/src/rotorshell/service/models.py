"""Request/response models for the scenario service."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str = "ok"
    version: str


class ScenarioListResponse(BaseModel):
    scenarios: list[str]


class ParamInfo(BaseModel):
    default: object
    doc: str


class ScenarioInfo(BaseModel):
    name: str
    description: str
    default_grid: list[int]
    params: dict[str, ParamInfo]


class RunRequest(BaseModel):
    scenario: str = Field(..., description="built-in scenario name")
    params: dict = Field(default_factory=dict)
    grid: Optional[tuple[int, int]] = None
    seed: int = 0


class ArtifactPayload(BaseModel):
    name: str
    media_type: str
    encoding: str           # "text" | "base64"
    content: str


class RunResponse(BaseModel):
    scenario: str
    summary: dict
    artifacts: list[ArtifactPayload]
