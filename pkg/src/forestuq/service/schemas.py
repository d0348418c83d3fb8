"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class ForestParamsModel(BaseModel):
    n_trees: int = Field(default=1000, ge=1)
    mtry: int | None = Field(default=None, ge=1)
    min_node_size: int = Field(default=5, ge=1)
    seed: int = Field(default=0, ge=0)


class FitRequest(BaseModel):
    x: list[list[float]]
    y: list[float]
    params: ForestParamsModel = Field(default_factory=ForestParamsModel)


class ModelInfo(BaseModel):
    model_id: str
    train_n: int
    train_p: int
    params: ForestParamsModel
    never_oob_rows: int


class ModelList(BaseModel):
    models: list[ModelInfo]


class PredictRequest(BaseModel):
    x: list[list[float]]
    alpha: float = Field(default=0.05, gt=0.0, lt=1.0)
    mode: str = Field(default="all", pattern="^(all|interval|quantile|mspe|bias|bc)$")


class PredictionRow(BaseModel):
    prediction: float
    bc_prediction: float | None = None
    mspe: float | None = None
    bias: float | None = None
    lower: float | None = None
    upper: float | None = None
    quantile: float | None = None
    fallback: bool = False


class PredictResponse(BaseModel):
    model_id: str
    alpha: float
    mode: str
    rows: list[PredictionRow]


class HealthResponse(BaseModel):
    status: str
    models: int
