"""HTTP/JSON facade over the core pipeline.

The model checkpoint and dataset manifest are loaded once at startup and
never mutated, so every endpoint is a pure function of its request body plus
those artifacts.  Non-2xx responses carry {"api_version", "code", "message"}.
"""

from __future__ import annotations

import base64

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel, Field

from . import __version__, explain, persist, regressor, synthgen
from .autodiff import ContractError

API_VERSION = 1
MAX_COUNTERFACTUAL_ITERS = 2000


class AttrsModel(BaseModel):
    size: float = Field(ge=0.0, le=1.0)
    porosity: float = Field(ge=0.0, le=1.0)
    dispersity: float = Field(ge=0.0, le=1.0)
    facetness: float = Field(ge=0.0, le=1.0)

    def to_vector(self) -> synthgen.AttributeVector:
        return synthgen.AttributeVector(self.size, self.porosity, self.dispersity, self.facetness)


class RenderRequest(BaseModel):
    seed: int = Field(ge=0)
    attrs: AttrsModel
    resolution: int = Field(default=64, ge=synthgen.MIN_RESOLUTION, le=256)


class PredictRequest(BaseModel):
    seed: int = Field(ge=0)
    attrs: AttrsModel


class SweepRequest(BaseModel):
    seed: int = Field(ge=0)
    attrs: AttrsModel
    attr_index: int = Field(ge=0, le=3)
    grid: list[float]


class CounterfactualRequest(BaseModel):
    seed: int = Field(ge=0)
    attrs: AttrsModel
    target_stress: float
    lam: float = Field(default=1.0, alias="lambda", ge=0.0)
    norm_order: int = Field(default=2)
    step_size: float = Field(default=0.05, gt=0.0)
    max_iters: int = Field(default=300, ge=1, le=MAX_COUNTERFACTUAL_ITERS)
    tol: float = Field(default=1e-7, gt=0.0)

    model_config = {"populate_by_name": True}


def _error(status: int, code: str, message: str) -> HTTPException:
    return HTTPException(status_code=status, detail={"code": code, "message": message})


def create_app(model_path: str | None = None, manifest_path: str | None = None) -> FastAPI:
    app = FastAPI(title="knoblab", version=__version__)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.model = persist.load_model(model_path) if model_path else None
    app.state.manifest = persist.read_manifest(manifest_path) if manifest_path else None

    @app.exception_handler(HTTPException)
    async def http_error(request: Request, exc: HTTPException):
        detail = exc.detail if isinstance(exc.detail, dict) else {"code": "error", "message": str(exc.detail)}
        return JSONResponse(status_code=exc.status_code, content={"api_version": API_VERSION, **detail})

    @app.exception_handler(RequestValidationError)
    async def validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=422,
            content={"api_version": API_VERSION, "code": "invalid_request", "message": str(exc.errors())},
        )

    def require_model() -> regressor.RegressorModel:
        if app.state.model is None:
            raise _error(409, "no_model", "no model checkpoint loaded")
        return app.state.model

    @app.get("/health")
    def health():
        return {
            "api_version": API_VERSION,
            "status": "ok",
            "model_loaded": app.state.model is not None,
            "version": __version__,
        }

    @app.get("/lots")
    def lots():
        if app.state.manifest is None:
            raise _error(409, "no_manifest", "no dataset manifest loaded")
        entries = sorted(app.state.manifest.lots, key=lambda lot: lot.lot_id)
        return {
            "api_version": API_VERSION,
            "lots": [
                {
                    "lot_id": lot.lot_id,
                    "attrs": dict(zip(synthgen.ATTRIBUTE_NAMES, lot.attrs.as_array().tolist())),
                    "true_stress": lot.true_stress,
                    "tiles": lot.tiles,
                }
                for lot in entries
            ],
        }

    @app.post("/render")
    def render(req: RenderRequest):
        image = synthgen.render_edit(req.seed, req.attrs.to_vector(), req.resolution)
        return {
            "api_version": API_VERSION,
            "image": base64.b64encode(persist.png_bytes(image)).decode("ascii"),
            "width": req.resolution,
            "height": req.resolution,
        }

    @app.post("/predict")
    def predict(req: PredictRequest):
        model = require_model()
        image = synthgen.render_edit(req.seed, req.attrs.to_vector(), model.resolution)
        return {"api_version": API_VERSION, "stress": regressor.predict(model, image)}

    @app.post("/sweep")
    def sweep(req: SweepRequest):
        model = require_model()
        try:
            result = explain.forward_sweep(
                model, req.seed, req.attrs.to_vector(), req.attr_index, req.grid
            )
        except ContractError as exc:
            raise _error(422, "invalid_sweep", str(exc)) from exc
        return {"api_version": API_VERSION, **result.to_dict()}

    @app.post("/counterfactual")
    def counterfactual(req: CounterfactualRequest):
        model = require_model()
        try:
            cfg = explain.CounterfactualConfig(
                lam=req.lam,
                norm_order=req.norm_order,
                step_size=req.step_size,
                max_iters=req.max_iters,
                tol=req.tol,
            )
        except ContractError as exc:
            raise _error(422, "invalid_config", str(exc)) from exc
        report = explain.counterfactual(model, req.seed, req.attrs.to_vector(), req.target_stress, cfg)
        # same serializer as the CLI so the bodies match byte for byte
        return Response(content=report.to_json(), media_type="application/json")

    return app
