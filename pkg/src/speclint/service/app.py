"""HTTP service exposing the annotation and triage workflow.

All mutations funnel through the project store under an in-process lock;
the phase gate lives here too: advancing requires zero pending
annotations. Errors map to the closed code set
{unknown_pair, wrong_phase, pair_not_sampled, annotation_incomplete,
backend_unavailable, bad_request}.
"""

from __future__ import annotations

import threading

from fastapi import FastAPI, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from ..errors import (
    AnnotationIncomplete,
    BackendUnavailable,
    PairNotSampled,
    SpeclintError,
    UnknownPair,
    WrongPhase,
)
from ..learner import EnsembleRunner, apply_triage, phase_config_from_manifest, run_phase
from ..pairing import (
    STATUS_PREDICTED,
    STATUS_TRIAGED_CONFIRMED,
    STATUS_TRIAGED_CONTEXT_FP,
)
from ..store import STATE_AWAITING, STATE_PAIRED, STATE_PHASE_COMPLETE, Project
from ..taxonomy import NLILabel, case_verdict, map_nli_to_consistency
from . import schemas

_HTTP_STATUS = {
    "unknown_pair": 404,
    "wrong_phase": 409,
    "pair_not_sampled": 409,
    "annotation_incomplete": 409,
    "backend_unavailable": 503,
    "bad_request": 400,
}

_CODE_MAP = {
    UnknownPair: "unknown_pair",
    WrongPhase: "wrong_phase",
    PairNotSampled: "pair_not_sampled",
    AnnotationIncomplete: "annotation_incomplete",
    BackendUnavailable: "backend_unavailable",
}


def _error_response(code: str, message: str, **details) -> JSONResponse:
    body = {"code": code, "message": message}
    body.update(details)
    return JSONResponse(status_code=_HTTP_STATUS.get(code, 400), content=body)


def create_app(
    project: Project,
    runner: EnsembleRunner | None = None,
    static_dir: str | None = None,
) -> FastAPI:
    app = FastAPI(title="speclint", version="0.1.0")
    state = {"runner": runner}
    mutation_lock = threading.Lock()

    def get_runner() -> EnsembleRunner:
        if state["runner"] is None:
            state["runner"] = EnsembleRunner(project)
        return state["runner"]

    @app.exception_handler(SpeclintError)
    async def handle_domain_error(request: Request, error: SpeclintError):
        code = _CODE_MAP.get(type(error), "bad_request")
        return _error_response(code, error.message, **error.details)

    @app.exception_handler(RequestValidationError)
    async def handle_validation_error(request: Request, error: RequestValidationError):
        return _error_response("bad_request", str(error.errors()[:1]))

    # ------------------------------------------------------------------
    @app.get("/api/project", response_model=schemas.ProjectSummary)
    def project_summary():
        manifest = project.manifest
        return schemas.ProjectSummary(
            project_id=manifest.project_id,
            phase_state=manifest.phase_state,
            phase_label=project.phase_label(),
            k_phases=manifest.k_phases,
            sample_size=manifest.sample_size,
            confidence_threshold=manifest.confidence_threshold,
            corpora=[p.corpus_id for p in manifest.corpora],
            scopes=[s.name for s in manifest.scopes],
            segments=len(project.segments_by_id),
            pairs=len(project.pairs),
            candidates=sum(1 for p in project.pairs.values() if p.status == "candidate"),
            annotations=len(project.active_annotations()),
        )

    # ------------------------------------------------------------------
    @app.get("/api/queue", response_model=schemas.QueueResponse)
    def queue(
        phase: int | None = None,
        offset: int = Query(default=0, ge=0),
        limit: int = Query(default=50, ge=1, le=500),
    ):
        if phase is None:
            phase = project.manifest.phase_state["current_phase"]
        items = project.samples.get(phase, [])
        annotated = {
            a.pair_id for a in project.annotations if a.phase == phase and not a.superseded
        }
        rows = []
        for item in items[offset : offset + limit]:
            pos = project.pairs[item["pair_id"]]
            rows.append(
                schemas.QueueItem(
                    pair_id=pos.pair_id,
                    segment_a=_segment_view(project, pos.segment_a),
                    segment_b=_segment_view(project, pos.segment_b),
                    psi=pos.psi,
                    model_prediction=schemas.PredictionView(
                        label=item["label"],
                        probs=item["probs"],
                        confidence=item["confidence"],
                    ),
                    annotated=item["pair_id"] in annotated,
                )
            )
        return schemas.QueueResponse(
            phase=phase,
            total=len(items),
            pending=len(project.pending_pairs(phase)),
            offset=offset,
            items=rows,
        )

    # ------------------------------------------------------------------
    @app.post("/api/annotations", response_model=schemas.AnnotationResponse)
    def submit_annotation(body: schemas.AnnotationRequest):
        with mutation_lock:
            phase = project.manifest.phase_state["current_phase"]
            annotation = project.record_annotation(
                pair_id=body.pair_id, case=body.case, annotator=body.annotator, phase=phase
            )
            return schemas.AnnotationResponse(
                pair_id=annotation.pair_id,
                case=annotation.case,
                nli=annotation.nli.value,
                verdict=case_verdict(annotation.case).value,
                pending=len(project.pending_pairs(phase)),
            )

    # ------------------------------------------------------------------
    @app.post("/api/phase/advance", response_model=schemas.AdvanceResponse)
    def advance_phase():
        with mutation_lock:
            runner = get_runner()
            manifest = project.manifest
            status = manifest.phase_state["status"]
            current = manifest.phase_state["current_phase"]

            if status == STATE_PAIRED:
                outcome = run_phase(project, phase_config_from_manifest(project, 0), runner)
                completed = outcome
            elif status == STATE_AWAITING:
                pending = project.pending_pairs(current)
                if pending:
                    raise AnnotationIncomplete(
                        f"{len(pending)} annotation(s) still pending", pending=len(pending)
                    )
                completed = run_phase(
                    project, phase_config_from_manifest(project, current), runner
                )
            elif status == STATE_PHASE_COMPLETE:
                completed = None
            else:
                raise WrongPhase(f"cannot advance from state {project.phase_label()}")

            response = schemas.AdvanceResponse(status="complete")
            if completed is not None:
                response.completed_phase = completed.phase
                response.report = completed.report

            # queue up the next phase's sample so annotators can continue
            state_now = project.manifest.phase_state
            if (
                state_now["status"] == STATE_PHASE_COMPLETE
                and state_now["current_phase"] < manifest.k_phases
            ):
                nxt = run_phase(
                    project,
                    phase_config_from_manifest(project, state_now["current_phase"] + 1),
                    runner,
                )
                response.next_phase = nxt.phase
                response.pending = nxt.pending
                response.status = "awaiting_annotation"
            else:
                response.status = project.manifest.phase_state["status"]
            return response

    # ------------------------------------------------------------------
    @app.get("/api/results", response_model=schemas.ResultsResponse)
    def results(
        verdict: str | None = None,
        min_confidence: float = Query(default=0.0, ge=0.0, le=1.0),
    ):
        phase = _latest_phase_with_decisions(project)
        decisions = project.read_phase_decisions(phase) if phase is not None else []
        rows = []
        confirmed = 0
        context_fp = 0
        for record in decisions:
            label = NLILabel(record["final"])
            row_verdict = map_nli_to_consistency(label).value
            if verdict and row_verdict != verdict:
                continue
            if record["confidence"] < min_confidence:
                continue
            pos = project.pairs.get(record["pair_id"])
            if pos is None or pos.status not in (
                STATUS_PREDICTED,
                STATUS_TRIAGED_CONFIRMED,
                STATUS_TRIAGED_CONTEXT_FP,
            ):
                continue
            if pos.status == STATUS_TRIAGED_CONTEXT_FP:
                context_fp += 1
            else:
                confirmed += 1
            rows.append(
                schemas.ResultItem(
                    pair_id=pos.pair_id,
                    segment_a=_segment_view(project, pos.segment_a),
                    segment_b=_segment_view(project, pos.segment_b),
                    psi=pos.psi,
                    final=label.value,
                    verdict=row_verdict,
                    confidence=record["confidence"],
                    status=pos.status,
                )
            )
        rows.sort(key=lambda r: (-r.confidence, r.pair_id))
        return schemas.ResultsResponse(
            phase=phase if phase is not None else -1,
            total=len(rows),
            confirmed=confirmed,
            context_fp=context_fp,
            items=rows,
        )

    # ------------------------------------------------------------------
    @app.post("/api/triage", response_model=schemas.TriageResponse)
    def triage(body: schemas.TriageRequest):
        with mutation_lock:
            new_status, confirmed, context_fp = apply_triage(project, body.pair_id, body.status)
            return schemas.TriageResponse(
                pair_id=body.pair_id, status=new_status, confirmed=confirmed, context_fp=context_fp
            )

    # ------------------------------------------------------------------
    @app.get("/api/metrics", response_model=schemas.MetricsResponse)
    def metrics(phase: int):
        report = project.read_phase_report(phase)
        if report is None:
            raise SpeclintError(f"no report for phase {phase}")
        return schemas.MetricsResponse(
            phase=phase,
            train_size=report["train_size"],
            synthetic_size=report["synthetic_size"],
            metrics_ensemble=report["metrics_ensemble"],
            metrics_per_model=report["metrics_per_model"],
        )

    if static_dir is not None:
        from pathlib import Path

        from fastapi.staticfiles import StaticFiles

        if Path(static_dir).is_dir():
            app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app


def _segment_view(project: Project, segment_id: str) -> schemas.SegmentView:
    segment = project.segments_by_id[segment_id]
    return schemas.SegmentView(
        segment_id=segment.segment_id,
        section_path=segment.section_path,
        text=segment.text,
    )


def _latest_phase_with_decisions(project: Project) -> int | None:
    latest = None
    phases_dir = project.path / "phases"
    if not phases_dir.exists():
        return None
    for directory in phases_dir.iterdir():
        if (directory / "decisions.jsonl").exists():
            try:
                number = int(directory.name.split("-", 1)[1])
            except (IndexError, ValueError):
                continue
            latest = number if latest is None else max(latest, number)
    return latest


def serve(
    project: Project,
    port: int = 8173,
    host: str = "127.0.0.1",
    static_dir: str | None = None,
) -> None:
    import socket

    import uvicorn

    from ..errors import PortInUse

    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((host, port))
    except OSError as error:
        raise PortInUse(f"cannot bind {host}:{port}: {error}") from error
    finally:
        probe.close()

    app = create_app(project, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")
