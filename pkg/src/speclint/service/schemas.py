"""Pydantic request/response models for the HTTP API."""

from __future__ import annotations

from pydantic import BaseModel, Field


class ErrorBody(BaseModel):
    code: str
    message: str


class SegmentView(BaseModel):
    segment_id: str
    section_path: str
    text: str


class PredictionView(BaseModel):
    label: str
    probs: dict[str, float]
    confidence: float


class QueueItem(BaseModel):
    pair_id: str
    segment_a: SegmentView
    segment_b: SegmentView
    psi: float
    model_prediction: PredictionView
    annotated: bool


class QueueResponse(BaseModel):
    phase: int
    total: int
    pending: int
    offset: int
    items: list[QueueItem]


class AnnotationRequest(BaseModel):
    pair_id: str
    case: int = Field(ge=1, le=7)
    annotator: str = Field(min_length=1)


class AnnotationResponse(BaseModel):
    pair_id: str
    case: int
    nli: str
    verdict: str
    pending: int


class AdvanceResponse(BaseModel):
    status: str
    completed_phase: int | None = None
    report: dict | None = None
    next_phase: int | None = None
    pending: int = 0


class ResultItem(BaseModel):
    pair_id: str
    segment_a: SegmentView
    segment_b: SegmentView
    psi: float
    final: str
    verdict: str
    confidence: float
    status: str


class ResultsResponse(BaseModel):
    phase: int
    total: int
    confirmed: int
    context_fp: int
    items: list[ResultItem]


class TriageRequest(BaseModel):
    pair_id: str
    status: str  # confirmed | context_fp


class TriageResponse(BaseModel):
    pair_id: str
    status: str
    confirmed: int
    context_fp: int


class ProjectSummary(BaseModel):
    project_id: str
    phase_state: dict
    phase_label: str
    k_phases: int
    sample_size: int
    confidence_threshold: float
    corpora: list[str]
    scopes: list[str]
    segments: int
    pairs: int
    candidates: int
    annotations: int


class MetricsResponse(BaseModel):
    phase: int
    train_size: int
    synthetic_size: int
    metrics_ensemble: dict
    metrics_per_model: dict[str, dict]
