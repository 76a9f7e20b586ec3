"""Wire-protocol HTTP server around the reference NLI model.

GET  /v1/health            -> {status: "ok", model_id} (503 until loaded)
POST /v1/predict           -> probabilities per pair (503 while training)
POST /v1/train             -> fine-tunes and bumps {model_version}
Malformed bodies get protocol-level 400s.
"""

from __future__ import annotations

import argparse
import threading

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .model import LABELS, NliModel


class PredictPair(BaseModel):
    id: str
    premise: str = Field(min_length=1)
    hypothesis: str = Field(min_length=1)


class PredictRequest(BaseModel):
    pairs: list[PredictPair] = Field(min_length=1)


class TrainExample(BaseModel):
    premise: str = Field(min_length=1)
    hypothesis: str = Field(min_length=1)
    label: str

    def validated_label(self) -> str:
        if self.label not in LABELS:
            raise ValueError(f"unknown label {self.label!r}")
        return self.label


class TrainConfig(BaseModel):
    learning_rate: float = 2e-5
    batch_size: int = 32
    epochs: int = 3
    seed: int = 0


class TrainRequest(BaseModel):
    examples: list[TrainExample] = Field(min_length=1)
    config: TrainConfig = Field(default_factory=TrainConfig)


def create_app(
    model_id: str = "ref-backend",
    max_seq_tokens: int = 512,
    defer_load: bool = False,
    train_epoch_hook=None,
) -> FastAPI:
    app = FastAPI(title="nli-backend", version="0.1.0")
    state = {"model": None if defer_load else NliModel(model_id, max_seq_tokens)}
    train_lock = threading.Lock()
    app.state.train_epoch_hook = train_epoch_hook

    def load() -> NliModel:
        if state["model"] is None:
            state["model"] = NliModel(model_id, max_seq_tokens)
        return state["model"]

    app.state.load_model = load

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, error: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": "malformed body"})

    def unavailable(reason: str) -> JSONResponse:
        return JSONResponse(status_code=503, content={"error": reason})

    @app.get("/v1/health")
    def health():
        model = state["model"]
        if model is None:
            return unavailable("model not loaded yet")
        if model.training:
            return unavailable("training in progress")
        return {"status": "ok", "model_id": model.model_id}

    @app.post("/v1/predict")
    def predict(body: PredictRequest):
        model = state["model"]
        if model is None:
            return unavailable("model not loaded yet")
        if model.training:
            return unavailable("training in progress")
        predictions = model.predict([(p.id, p.premise, p.hypothesis) for p in body.pairs])
        return {"predictions": predictions}

    @app.post("/v1/train")
    def train(body: TrainRequest):
        model = state["model"]
        if model is None:
            return unavailable("model not loaded yet")
        if not train_lock.acquire(blocking=False):
            return unavailable("training in progress")
        try:
            try:
                examples = [
                    (e.premise, e.hypothesis, e.validated_label()) for e in body.examples
                ]
            except ValueError:
                return JSONResponse(status_code=400, content={"error": "malformed body"})
            version = model.train(
                examples,
                learning_rate=body.config.learning_rate,
                batch_size=body.config.batch_size,
                epochs=body.config.epochs,
                seed=body.config.seed,
                epoch_hook=app.state.train_epoch_hook,
            )
            return {"model_version": version}
        finally:
            train_lock.release()

    return app


def main() -> None:
    import uvicorn

    parser = argparse.ArgumentParser(prog="nli-backend")
    parser.add_argument("--port", type=int, default=9090)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--model-id", default="ref-backend")
    parser.add_argument("--max-seq-tokens", type=int, default=512)
    args = parser.parse_args()
    uvicorn.run(
        create_app(model_id=args.model_id, max_seq_tokens=args.max_seq_tokens),
        host=args.host,
        port=args.port,
    )


if __name__ == "__main__":
    main()
