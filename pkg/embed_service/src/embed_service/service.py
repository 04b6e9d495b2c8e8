"""FastAPI app speaking the embedding protocol the pipeline's remote client
expects: POST /embed and GET /health."""

from __future__ import annotations

import argparse
import json
import os
from pathlib import Path

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .encoder import Pooling, SentenceEncoder, ServiceConfig


class EmbedRequest(BaseModel):
    texts: list[str]
    max_tokens: int | None = None


def load_config(path: str | os.PathLike | None = None) -> ServiceConfig:
    """Config file (JSON) overridden by EMBED_SERVICE_* environment vars."""

    raw: dict = {}
    if path is not None:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    env = {
        "model_id": os.environ.get("EMBED_SERVICE_MODEL"),
        "max_tokens": os.environ.get("EMBED_SERVICE_MAX_TOKENS"),
        "pooling": os.environ.get("EMBED_SERVICE_POOLING"),
        "host": os.environ.get("EMBED_SERVICE_HOST"),
        "port": os.environ.get("EMBED_SERVICE_PORT"),
    }
    raw.update({k: v for k, v in env.items() if v is not None})
    return ServiceConfig(
        model_id=raw.get("model_id", ServiceConfig.model_id),
        max_tokens=int(raw.get("max_tokens", ServiceConfig.max_tokens)),
        pooling=Pooling(raw.get("pooling", ServiceConfig.pooling.value)),
        host=raw.get("host", ServiceConfig.host),
        port=int(raw.get("port", ServiceConfig.port)),
        batch_limit=int(raw.get("batch_limit", ServiceConfig.batch_limit)),
    )


def create_app(config: ServiceConfig | None = None, *, eager_load: bool = True) -> FastAPI:
    config = config or ServiceConfig()
    encoder = SentenceEncoder(config)
    app = FastAPI(title="embed-service")
    app.state.encoder = encoder

    if eager_load:
        encoder.load()

    @app.get("/health")
    def health():
        if not encoder.loaded:
            return JSONResponse(status_code=503, content={"status": "loading"})
        return {"status": "ok", "dim": encoder.dim}

    @app.post("/embed")
    def embed(request: EmbedRequest):
        if not encoder.loaded:
            return JSONResponse(status_code=503, content={"status": "loading"})
        if not request.texts:
            return JSONResponse(status_code=400, content={"error": "empty batch"})
        if len(request.texts) > config.batch_limit:
            return JSONResponse(
                status_code=400,
                content={"error": f"batch exceeds limit of {config.batch_limit}"},
            )
        # Empty items get a per-item error entry; the rest of the batch is
        # still embedded in order.
        errors = [
            {"index": i, "error": "empty text"}
            for i, text in enumerate(request.texts)
            if not text.strip()
        ]
        valid = [(i, t) for i, t in enumerate(request.texts) if t.strip()]
        encoded = encoder.encode([t for _, t in valid], request.max_tokens)
        vectors: list[list[float] | None] = [None] * len(request.texts)
        for (i, _), vec in zip(valid, encoded):
            vectors[i] = vec
        body: dict = {"dim": encoder.dim, "vectors": vectors}
        if errors:
            body["errors"] = errors
        return body

    return app


def main(argv: list[str] | None = None) -> None:
    import uvicorn

    parser = argparse.ArgumentParser(description="Sentence embedding microservice.")
    parser.add_argument("--config", help="JSON config file.")
    parser.add_argument("--host")
    parser.add_argument("--port", type=int)
    args = parser.parse_args(argv)
    config = load_config(args.config)
    host = args.host or config.host
    port = args.port if args.port is not None else config.port
    uvicorn.run(create_app(config), host=host, port=port)


if __name__ == "__main__":
    main()
