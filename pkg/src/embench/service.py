"""Reference embedding service speaking the POST /embed wire protocol.

Serves deterministic mock vectors, which makes it a drop-in stand-in for a real
embedding endpoint when exercising the remote provider. Requires the `service`
extra (fastapi + uvicorn).
"""

from __future__ import annotations

from fastapi import FastAPI
from pydantic import BaseModel

from .providers import MockProvider


class EmbedRequest(BaseModel):
    model: str = "default"
    texts: list[str]


class EmbedResponse(BaseModel):
    embeddings: list[list[float]]


def create_app(dim: int = 256, seed: int = 0) -> FastAPI:
    app = FastAPI(title="embench mock embedding service")
    provider = MockProvider(dim=dim, seed=seed)

    @app.post("/embed", response_model=EmbedResponse)
    def embed(request: EmbedRequest) -> EmbedResponse:
        vectors = provider.embed_batch(request.texts)
        return EmbedResponse(embeddings=[row.tolist() for row in vectors])

    return app


def main() -> None:
    import argparse

    import uvicorn

    parser = argparse.ArgumentParser(description="Serve deterministic mock embeddings.")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8787)
    parser.add_argument("--dim", type=int, default=256)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    uvicorn.run(create_app(dim=args.dim, seed=args.seed), host=args.host, port=args.port)


if __name__ == "__main__":
    main()
