"""FastAPI application implementing the retrieval engine's wire protocol.

    POST /embed  {"kind": "frames"|"clip"|"query", "video_id"?, "frame_indices"?,
                  "query"?, "dim_hint"?}                     -> {"vectors": [[float]]}
    POST /score  {"query", "prompt"?, "video_id", "frame_indices"}
                                                             -> {"logits": [[float x5]]}
    GET  /health                                             -> {"status": "ok", "dim": int}

Request handling is stateless; the stub engine is pure, so concurrent
requests are safe. Engine failures surface as HTTP 500 with a
structured JSON body {"error": str}; malformed requests get 400.
"""

from __future__ import annotations

import logging

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .config import BackendConfig
from .errors import FixtureError, ServiceError
from .stub import StubEngine

logger = logging.getLogger(__name__)


class _BadRequest(ServiceError):
    pass


def _require(body: dict, key: str, kind: type):
    value = body.get(key)
    if not isinstance(value, kind) or (kind is str and not value):
        raise _BadRequest(f"field {key!r} must be a non-empty {kind.__name__}")
    return value


def _frame_indices(body: dict) -> list[int]:
    indices = body.get("frame_indices")
    if (not isinstance(indices, list) or not indices
            or any(not isinstance(i, int) or isinstance(i, bool) or i < 0 for i in indices)):
        raise _BadRequest("field 'frame_indices' must be a non-empty list of ints >= 0")
    return indices


def build_engine(config: BackendConfig):
    if config.stub_mode:
        return StubEngine.load(config.fixture)
    from .models import ModelEngine

    return ModelEngine(config)  # raises ModelLoadError -> caller refuses to start


def create_app(config: BackendConfig) -> FastAPI:
    engine = build_engine(config)
    app = FastAPI(title="stir-service", version="0.1.0")

    @app.exception_handler(_BadRequest)
    async def bad_request(request: Request, exc: _BadRequest):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(ServiceError)
    async def service_error(request: Request, exc: ServiceError):
        logger.error("request failed: %s", exc)
        return JSONResponse(status_code=500, content={"error": str(exc)})

    @app.get("/health")
    async def health():
        return {"status": "ok", "dim": engine.dim}

    @app.post("/embed")
    async def embed(request: Request):
        body = await _json_body(request)
        kind = _require(body, "kind", str)
        if kind == "frames":
            vectors = engine.embed_frames(_require(body, "video_id", str), _frame_indices(body))
        elif kind == "clip":
            vectors = engine.embed_clip(_require(body, "video_id", str), _frame_indices(body))
        elif kind == "query":
            vectors = engine.embed_query(_require(body, "query", str))
        else:
            raise _BadRequest(f"unknown embed kind {kind!r}")
        return {"vectors": vectors}

    @app.post("/score")
    async def score(request: Request):
        body = await _json_body(request)
        query = _require(body, "query", str)
        video_id = _require(body, "video_id", str)
        indices = _frame_indices(body)
        logits = engine.score(query, video_id, indices, prompt=body.get("prompt"))
        return {"logits": logits}

    return app


async def _json_body(request: Request) -> dict:
    try:
        body = await request.json()
    except ValueError:
        raise _BadRequest("request body is not valid JSON")
    if not isinstance(body, dict):
        raise _BadRequest("request body must be a JSON object")
    return body


# re-exported for callers that want to surface fixture problems distinctly
__all__ = ["create_app", "build_engine", "FixtureError"]
