"""FastAPI service wrapping the core package: fit once, query many times.

Fitted models live in an in-process registry keyed by id; prediction
requests reuse each model's out-of-bag predictions and leaf index, so
per-query work is proportional to leaf occupancy rather than forest size.
"""

from __future__ import annotations

import uuid
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, HTTPException

from ..data import Dataset
from ..errordist import LeafIndex, batch_error_estimates, build_leaf_index
from ..forest import Forest, ForestParams, OobPredictions, fit_forest, oob_predict
from .schemas import (
    FitRequest,
    ForestParamsModel,
    HealthResponse,
    ModelInfo,
    ModelList,
    PredictRequest,
    PredictResponse,
    PredictionRow,
)


@dataclass
class FittedModel:
    forest: Forest
    data: Dataset
    oob: OobPredictions
    index: LeafIndex

    def info(self, model_id: str) -> ModelInfo:
        p = self.forest.params
        return ModelInfo(
            model_id=model_id,
            train_n=self.forest.train_n,
            train_p=self.forest.train_p,
            params=ForestParamsModel(n_trees=p.n_trees, mtry=p.mtry,
                                     min_node_size=p.min_node_size, seed=p.seed),
            never_oob_rows=int((~self.oob.valid).sum()),
        )


def _as_matrix(rows: list[list[float]], p: int | None = None) -> np.ndarray:
    try:
        x = np.asarray(rows, dtype=np.float64)
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=f"ragged covariate rows: {exc}")
    if x.ndim != 2 or x.shape[0] == 0:
        raise HTTPException(status_code=400, detail="x must be a non-empty matrix")
    if not np.isfinite(x).all():
        raise HTTPException(status_code=400, detail="x contains NaN or infinite values")
    if p is not None and x.shape[1] != p:
        raise HTTPException(status_code=400,
                            detail=f"expected {p} covariates per row, got {x.shape[1]}")
    return x


def create_app() -> FastAPI:
    app = FastAPI(title="forestuq", version="0.1.0")
    registry: dict[str, FittedModel] = {}

    def lookup(model_id: str) -> FittedModel:
        model = registry.get(model_id)
        if model is None:
            raise HTTPException(status_code=404, detail=f"no model {model_id!r}")
        return model

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", models=len(registry))

    @app.post("/models", response_model=ModelInfo, status_code=201)
    def fit(req: FitRequest):
        x = _as_matrix(req.x)
        y = np.asarray(req.y, dtype=np.float64)
        try:
            data = Dataset(x=x, y=y)
            params = ForestParams(n_trees=req.params.n_trees, mtry=req.params.mtry,
                                  min_node_size=req.params.min_node_size,
                                  seed=req.params.seed)
            forest = fit_forest(data, params)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        model = FittedModel(
            forest=forest,
            data=data,
            oob=oob_predict(forest, data),
            index=build_leaf_index(forest, data),
        )
        model_id = uuid.uuid4().hex[:12]
        registry[model_id] = model
        return model.info(model_id)

    @app.get("/models", response_model=ModelList)
    def list_models():
        return ModelList(models=[m.info(mid) for mid, m in registry.items()])

    @app.get("/models/{model_id}", response_model=ModelInfo)
    def get_model(model_id: str):
        return lookup(model_id).info(model_id)

    @app.delete("/models/{model_id}", status_code=204)
    def delete_model(model_id: str):
        lookup(model_id)
        del registry[model_id]

    @app.post("/models/{model_id}/predict", response_model=PredictResponse)
    def predict(model_id: str, req: PredictRequest):
        model = lookup(model_id)
        x = _as_matrix(req.x, model.forest.train_p)
        levels = (req.alpha,) if req.mode == "quantile" else ()
        est = batch_error_estimates(
            model.forest, model.data, model.oob, x,
            req.alpha if req.mode != "quantile" else 0.05,
            index=model.index, quantile_levels=levels,
        )
        keep = {
            "all": ("bc_prediction", "mspe", "bias", "lower", "upper"),
            "interval": ("lower", "upper"),
            "mspe": ("mspe",),
            "bias": ("bias",),
            "bc": ("bc_prediction",),
            "quantile": (),
        }[req.mode]
        rows = []
        for j in range(x.shape[0]):
            row = PredictionRow(
                prediction=float(est["prediction"][j]),
                fallback=bool(est["fallback"][j]),
            )
            for fieldname in keep:
                setattr(row, fieldname, float(est[fieldname][j]))
            if req.mode == "quantile":
                row.quantile = float(est[f"q{req.alpha:g}"][j])
            rows.append(row)
        return PredictResponse(model_id=model_id, alpha=req.alpha, mode=req.mode, rows=rows)

    return app
