"""Directory-backed project store.

A project is a plain directory of canonical-JSON files plus two
append-only logs (annotations.jsonl and events.jsonl). Whole-file
artifacts (manifest, segments, pairs, reports) are written atomically;
mutations go through append_event under a single-writer flock, and state
is reconstructed on load by replaying both logs in sequence order.
Records carry a monotonically increasing `seq` so the two logs merge into
one total order. A torn final line (crash mid-append) is discarded with a
warning; torn interior lines mean real corruption and fail the load.
"""

from __future__ import annotations

import fcntl
import json
import logging
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

from .augment import EdaParams
from .classifier import LabeledExample
from .corpus import CorpusProfile, Segment
from .errors import (
    CorruptLayout,
    DanglingReference,
    IoFailure,
    LockHeldElsewhere,
    PairNotSampled,
    PathNotEmpty,
    UnknownPair,
    VersionMismatch,
    WrongPhase,
)
from .pairing import (
    STATUS_ANNOTATED,
    STATUS_CANDIDATE,
    STATUS_PENDING,
    STATUS_PREDICTED,
    FiltrationSummary,
    PairScope,
    PoS,
)
from .taxonomy import Annotation, map_case_to_nli

logger = logging.getLogger(__name__)

FORMAT_VERSION = "1"

STATE_CONFIGURED = "configured"
STATE_PAIRED = "paired"
STATE_AWAITING = "awaiting_annotation"
STATE_PHASE_COMPLETE = "phase_complete"
STATE_FINISHED = "finished"

_ALLOWED_TRANSITIONS = {
    STATE_CONFIGURED: {STATE_PAIRED},
    STATE_PAIRED: {STATE_AWAITING, STATE_PHASE_COMPLETE},  # phase 0 has no sampling
    STATE_AWAITING: {STATE_PHASE_COMPLETE},
    STATE_PHASE_COMPLETE: {STATE_AWAITING, STATE_FINISHED},
    STATE_FINISHED: set(),
}


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def canonical_json_pretty(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, indent=2) + "\n"


def utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def write_file_atomic(path: Path, content: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(content, encoding="utf-8")
    os.replace(tmp, path)


def read_jsonl(path: Path, tolerate_torn_tail: bool = False) -> list[dict]:
    if not path.exists():
        return []
    records = []
    lines = path.read_text(encoding="utf-8").splitlines()
    for i, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as error:
            if tolerate_torn_tail and i == len(lines) - 1:
                logger.warning("discarding torn final line of %s", path)
                return records
            raise CorruptLayout(f"{path}:{i + 1} is not valid JSON: {error}") from error
    return records


@dataclass
class ProjectManifest:
    """Root configuration plus the coarse phase state machine."""

    project_id: str
    created_at: str
    corpora: list[CorpusProfile]
    scopes: list[PairScope]
    bands: dict[str, tuple[float, float]]
    members: list[dict]
    phase_state: dict = field(default_factory=lambda: {"current_phase": 0, "status": STATE_CONFIGURED})
    k_phases: int = 3
    sample_size: int = 150
    confidence_threshold: float = 0.6
    sampling_strategy: str = "uncertainty_stratified"
    eda: EdaParams = field(default_factory=EdaParams)
    format_version: str = FORMAT_VERSION

    def to_dict(self) -> dict:
        return {
            "project_id": self.project_id,
            "created_at": self.created_at,
            "corpora": [p.to_dict() for p in self.corpora],
            "scopes": [s.to_dict() for s in self.scopes],
            "bands": {name: list(band) for name, band in self.bands.items()},
            "members": self.members,
            "phase_state": self.phase_state,
            "k_phases": self.k_phases,
            "sample_size": self.sample_size,
            "confidence_threshold": self.confidence_threshold,
            "sampling_strategy": self.sampling_strategy,
            "eda": self.eda.to_dict(),
            "format_version": self.format_version,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProjectManifest":
        return cls(
            project_id=d["project_id"],
            created_at=d["created_at"],
            corpora=[CorpusProfile.from_dict(p) for p in d["corpora"]],
            scopes=[PairScope.from_dict(s) for s in d["scopes"]],
            bands={name: tuple(band) for name, band in d["bands"].items()},
            members=d["members"],
            phase_state=d["phase_state"],
            k_phases=d.get("k_phases", 3),
            sample_size=d.get("sample_size", 150),
            confidence_threshold=d.get("confidence_threshold", 0.6),
            sampling_strategy=d.get("sampling_strategy", "uncertainty_stratified"),
            eda=EdaParams.from_dict(d["eda"]) if "eda" in d else EdaParams(),
            format_version=d.get("format_version", "0"),
        )


class Project:
    """In-memory view of a project directory plus its mutation funnel."""

    def __init__(self, path: Path, manifest: ProjectManifest, clock: Callable[[], str] = utc_now):
        self.path = Path(path)
        self.manifest = manifest
        self.clock = clock
        self.segments: dict[str, list[Segment]] = {}
        self.segments_by_id: dict[str, Segment] = {}
        self.pairs: dict[str, PoS] = {}
        self.pair_order: dict[str, list[str]] = {}  # scope -> pair ids in file order
        self.annotations: list[Annotation] = []
        self.samples: dict[int, list[dict]] = {}  # phase -> ordered queue items
        self.gold: dict[str, int] = {}  # pair_id -> case
        self.seeds: list[LabeledExample] = []
        self._seq = 0
        self._lock_fd: int | None = None
        self.read_only = False

    # ------------------------------------------------------------------
    # layout helpers
    # ------------------------------------------------------------------
    @property
    def manifest_path(self) -> Path:
        return self.path / "manifest.json"

    @property
    def annotations_path(self) -> Path:
        return self.path / "annotations.jsonl"

    @property
    def events_path(self) -> Path:
        return self.path / "events.jsonl"

    def corpus_text_path(self, corpus_id: str) -> Path:
        return self.path / "corpora" / f"{corpus_id}.txt"

    def segments_path(self, corpus_id: str) -> Path:
        return self.path / "corpora" / f"{corpus_id}.segments.jsonl"

    def vectors_path(self, corpus_id: str) -> Path:
        return self.path / "vectors" / f"{corpus_id}.jsonl"

    def pairs_path(self, scope_name: str) -> Path:
        return self.path / "pairs" / f"{scope_name}.jsonl"

    def pairs_summary_path(self, scope_name: str) -> Path:
        return self.path / "pairs" / f"{scope_name}.summary.json"

    def phase_dir(self, phase: int) -> Path:
        return self.path / "phases" / f"phase-{phase}"

    # ------------------------------------------------------------------
    # locking
    # ------------------------------------------------------------------
    def acquire_writer_lock(self) -> None:
        if self._lock_fd is not None:
            return
        fd = os.open(self.path / "project.lock", os.O_CREAT | os.O_RDWR, 0o644)
        try:
            fcntl.flock(fd, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError:
            os.close(fd)
            raise LockHeldElsewhere(f"another writer holds the lock on {self.path}")
        self._lock_fd = fd

    def close(self) -> None:
        if self._lock_fd is not None:
            fcntl.flock(self._lock_fd, fcntl.LOCK_UN)
            os.close(self._lock_fd)
            self._lock_fd = None

    def __enter__(self) -> "Project":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _require_writer(self) -> None:
        if self.read_only:
            raise LockHeldElsewhere("project opened read-only")
        self.acquire_writer_lock()

    # ------------------------------------------------------------------
    # whole-file artifacts
    # ------------------------------------------------------------------
    def write_manifest(self) -> None:
        self._require_writer()
        payload = self.manifest.to_dict()
        # the on-disk manifest stores static config only; live phase state is
        # derived from the event log, so persist the genesis value
        payload["phase_state"] = {"current_phase": 0, "status": STATE_CONFIGURED}
        write_file_atomic(self.manifest_path, canonical_json_pretty(payload))

    def save_corpus_text(self, corpus_id: str, raw_text: str) -> None:
        self._require_writer()
        self._profile_for(corpus_id)  # validates the corpus is declared
        write_file_atomic(self.corpus_text_path(corpus_id), raw_text)

    def save_segments(self, corpus_id: str, segments: list[Segment]) -> None:
        self._require_writer()
        self._profile_for(corpus_id)
        lines = "".join(canonical_json(s.to_dict()) + "\n" for s in segments)
        write_file_atomic(self.segments_path(corpus_id), lines)
        self.segments[corpus_id] = list(segments)
        for segment in segments:
            self.segments_by_id[segment.segment_id] = segment

    def save_vectors(self, corpus_id: str, vectors) -> None:
        self._require_writer()
        lines = "".join(canonical_json(v.to_dict()) + "\n" for v in vectors)
        write_file_atomic(self.vectors_path(corpus_id), lines)

    def save_pairs(self, scope_name: str, pos_list: list[PoS], summary: FiltrationSummary) -> None:
        self._require_writer()
        lines = "".join(canonical_json(p.to_dict()) + "\n" for p in pos_list)
        write_file_atomic(self.pairs_path(scope_name), lines)
        summary_dict = summary.to_dict()
        if isinstance(summary_dict.get("reduction_factor"), float) and math.isinf(
            summary_dict["reduction_factor"]
        ):
            summary_dict["reduction_factor"] = None
        write_file_atomic(self.pairs_summary_path(scope_name), canonical_json_pretty(summary_dict))
        self.pair_order[scope_name] = [p.pair_id for p in pos_list]
        for pos in pos_list:
            self.pairs[pos.pair_id] = pos

    def set_gold(self, gold: dict[str, int]) -> None:
        self._require_writer()
        lines = "".join(
            canonical_json({"pair_id": pid, "case": case}) + "\n"
            for pid, case in sorted(gold.items())
        )
        write_file_atomic(self.path / "gold.jsonl", lines)
        self.gold = dict(gold)

    def set_seeds(self, seeds: list[LabeledExample]) -> None:
        self._require_writer()
        lines = "".join(canonical_json(e.to_dict()) + "\n" for e in seeds)
        write_file_atomic(self.path / "seeds.jsonl", lines)
        self.seeds = list(seeds)

    def write_phase_report(self, phase: int, report: dict) -> None:
        self._require_writer()
        directory = self.phase_dir(phase)
        directory.mkdir(parents=True, exist_ok=True)
        write_file_atomic(directory / "report.json", canonical_json_pretty(report))

    def write_phase_trainset(self, phase: int, examples: list[LabeledExample]) -> None:
        self._require_writer()
        directory = self.phase_dir(phase)
        directory.mkdir(parents=True, exist_ok=True)
        lines = "".join(canonical_json(e.to_dict()) + "\n" for e in examples)
        write_file_atomic(directory / "trainset.jsonl", lines)

    def write_phase_decisions(self, phase: int, decisions) -> None:
        self._require_writer()
        directory = self.phase_dir(phase)
        directory.mkdir(parents=True, exist_ok=True)
        lines = "".join(canonical_json(d.to_dict()) + "\n" for d in decisions)
        write_file_atomic(directory / "decisions.jsonl", lines)

    def write_phase_model(self, phase: int, model_id: str, payload: dict) -> None:
        self._require_writer()
        directory = self.phase_dir(phase) / "models"
        directory.mkdir(parents=True, exist_ok=True)
        write_file_atomic(directory / f"{model_id}.json", canonical_json_pretty(payload))

    def read_phase_report(self, phase: int) -> dict | None:
        path = self.phase_dir(phase) / "report.json"
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def read_phase_decisions(self, phase: int) -> list[dict]:
        return read_jsonl(self.phase_dir(phase) / "decisions.jsonl")

    # ------------------------------------------------------------------
    # event log
    # ------------------------------------------------------------------
    def _append_line(self, path: Path, record: dict) -> None:
        try:
            with open(path, "a", encoding="utf-8") as handle:
                handle.write(canonical_json(record) + "\n")
                handle.flush()
                os.fsync(handle.fileno())
        except OSError as error:
            raise IoFailure(f"append to {path} failed: {error}") from error

    def append_event(self, event: dict) -> dict:
        """Durably append one event, then apply it to in-memory state."""
        self._require_writer()
        self._seq += 1
        record = {"seq": self._seq, "ts": self.clock(), **event}
        self._append_line(self.events_path, record)
        self._apply_event(record)
        return record

    def _apply_event(self, event: dict) -> None:
        kind = event["type"]
        if kind == "status_change":
            pos = self.pairs.get(event["pair_id"])
            if pos is not None:
                pos.status = event["status"]
        elif kind == "results":
            for pair_id in event["pair_ids"]:
                pos = self.pairs.get(pair_id)
                if pos is not None and pos.status == STATUS_CANDIDATE:
                    pos.status = STATUS_PREDICTED
        elif kind == "phase_sample":
            self.samples[event["phase"]] = event["items"]
            for item in event["items"]:
                pos = self.pairs.get(item["pair_id"])
                if pos is not None:
                    pos.status = STATUS_PENDING
        elif kind == "phase_state":
            self.manifest.phase_state = {
                "current_phase": event["current_phase"],
                "status": event["status"],
            }
        else:
            raise CorruptLayout(f"unknown event type {kind!r}")

    # ------------------------------------------------------------------
    # annotations
    # ------------------------------------------------------------------
    def record_annotation(self, pair_id: str, case: int, annotator: str, phase: int) -> Annotation:
        self._require_writer()
        pos = self.pairs.get(pair_id)
        if pos is None:
            raise UnknownPair(f"no such pair {pair_id!r}")
        state = self.manifest.phase_state
        if not (state["status"] == STATE_AWAITING and state["current_phase"] == phase):
            raise WrongPhase(
                f"phase {phase} is not awaiting annotation "
                f"(current: {state['current_phase']} {state['status']})"
            )
        sampled = {item["pair_id"] for item in self.samples.get(phase, [])}
        if pair_id not in sampled:
            raise PairNotSampled(f"pair {pair_id!r} was not sampled in phase {phase}")

        replaced = None
        for item in self.samples.get(phase, []):
            if item["pair_id"] == pair_id:
                replaced = item.get("label")
                break
        annotation = Annotation(
            pair_id=pair_id,
            case=case,
            annotator=annotator,
            phase=phase,
            timestamp=self.clock(),
            replaced_prediction=replaced,
        )
        self._seq += 1
        record = {"seq": self._seq, **annotation.to_dict()}
        self._append_line(self.annotations_path, record)
        self._apply_annotation(annotation)
        return annotation

    def _apply_annotation(self, annotation: Annotation) -> None:
        for existing in self.annotations:
            if (
                existing.pair_id == annotation.pair_id
                and existing.phase == annotation.phase
                and not existing.superseded
            ):
                existing.superseded = True
        self.annotations.append(annotation)
        pos = self.pairs.get(annotation.pair_id)
        if pos is not None:
            pos.status = STATUS_ANNOTATED

    def active_annotations(self, up_to_phase: int | None = None) -> list[Annotation]:
        return [
            a
            for a in self.annotations
            if not a.superseded and (up_to_phase is None or a.phase <= up_to_phase)
        ]

    def pending_pairs(self, phase: int) -> list[str]:
        annotated = {
            a.pair_id for a in self.annotations if a.phase == phase and not a.superseded
        }
        return [
            item["pair_id"]
            for item in self.samples.get(phase, [])
            if item["pair_id"] not in annotated
        ]

    # ------------------------------------------------------------------
    # phase state machine
    # ------------------------------------------------------------------
    def set_phase_state(self, current_phase: int, status: str) -> None:
        previous = self.manifest.phase_state["status"]
        if status not in _ALLOWED_TRANSITIONS.get(previous, set()):
            raise WrongPhase(f"illegal phase transition {previous!r} -> {status!r}")
        self.append_event(
            {"type": "phase_state", "current_phase": current_phase, "status": status}
        )

    def phase_label(self) -> str:
        state = self.manifest.phase_state
        if state["status"] in (STATE_AWAITING, STATE_PHASE_COMPLETE):
            return f"phase_{state['current_phase']}_{state['status']}"
        return state["status"]

    # ------------------------------------------------------------------
    # derived views
    # ------------------------------------------------------------------
    def segment_text(self, segment_id: str) -> str:
        segment = self.segments_by_id.get(segment_id)
        if segment is None:
            raise DanglingReference(f"unknown segment {segment_id!r}")
        return segment.text

    def candidate_pairs(self) -> list[PoS]:
        order = [pid for scope in self.pair_order.values() for pid in scope]
        return [
            self.pairs[pid]
            for pid in order
            if self.pairs[pid].status
            in (STATUS_CANDIDATE, STATUS_PENDING, STATUS_ANNOTATED, STATUS_PREDICTED)
        ]

    def snapshot(self) -> str:
        """Canonical digest of mutable state, for reload-equality checks."""
        return canonical_json(
            {
                "phase_state": self.manifest.phase_state,
                "pairs": {pid: p.status for pid, p in sorted(self.pairs.items())},
                "annotations": [a.to_dict() for a in self.annotations],
                "samples": self.samples,
                "seq": self._seq,
            }
        )

    def _profile_for(self, corpus_id: str) -> CorpusProfile:
        for profile in self.manifest.corpora:
            if profile.corpus_id == corpus_id:
                return profile
        raise DanglingReference(f"corpus {corpus_id!r} is not declared in the manifest")


def init_project(path: str | Path, manifest: ProjectManifest, clock: Callable[[], str] = utc_now) -> Project:
    """Create the directory layout for a fresh project."""
    path = Path(path)
    if path.exists() and any(path.iterdir()):
        raise PathNotEmpty(f"{path} exists and is not empty")
    corpus_ids = [p.corpus_id for p in manifest.corpora]
    if len(corpus_ids) != len(set(corpus_ids)):
        raise ValueError(f"duplicate corpus ids in manifest: {corpus_ids}")
    scope_names = [s.name for s in manifest.scopes]
    if len(scope_names) != len(set(scope_names)):
        raise ValueError(f"duplicate scope names in manifest: {scope_names}")
    for sub in ("", "corpora", "pairs", "vectors", "phases"):
        (path / sub).mkdir(parents=True, exist_ok=True)
    project = Project(path, manifest, clock=clock)
    project.write_manifest()
    project.annotations_path.touch()
    project.events_path.touch()
    return project


def load_project(
    path: str | Path, read_only: bool = False, clock: Callable[[], str] = utc_now
) -> Project:
    """Reconstruct the full in-memory state from disk.

    Base artifacts load first, then both logs replay in seq order.
    """
    path = Path(path)
    manifest_path = path / "manifest.json"
    if not manifest_path.exists():
        raise CorruptLayout(f"{path} has no manifest.json")
    try:
        manifest = ProjectManifest.from_dict(json.loads(manifest_path.read_text(encoding="utf-8")))
    except (json.JSONDecodeError, KeyError) as error:
        raise CorruptLayout(f"manifest.json unreadable: {error}") from error
    if manifest.format_version != FORMAT_VERSION:
        raise VersionMismatch(
            f"project format {manifest.format_version!r}, reader supports {FORMAT_VERSION!r}"
        )

    project = Project(path, manifest, clock=clock)
    project.read_only = read_only

    for profile in manifest.corpora:
        segments_path = project.segments_path(profile.corpus_id)
        if segments_path.exists():
            segments = [Segment.from_dict(d) for d in read_jsonl(segments_path)]
            project.segments[profile.corpus_id] = segments
            for segment in segments:
                project.segments_by_id[segment.segment_id] = segment

    for scope in manifest.scopes:
        pairs_path = project.pairs_path(scope.name)
        if pairs_path.exists():
            order = []
            for record in read_jsonl(pairs_path):
                pos = PoS.from_dict(record)
                for sid in (pos.segment_a, pos.segment_b):
                    if sid not in project.segments_by_id:
                        raise DanglingReference(f"pair {pos.pair_id} references unknown segment {sid}")
                project.pairs[pos.pair_id] = pos
                order.append(pos.pair_id)
            project.pair_order[scope.name] = order

    gold_path = path / "gold.jsonl"
    if gold_path.exists():
        project.gold = {r["pair_id"]: r["case"] for r in read_jsonl(gold_path)}
    seeds_path = path / "seeds.jsonl"
    if seeds_path.exists():
        project.seeds = [LabeledExample.from_dict(r) for r in read_jsonl(seeds_path)]

    annotation_records = read_jsonl(project.annotations_path, tolerate_torn_tail=True)
    event_records = read_jsonl(project.events_path, tolerate_torn_tail=True)
    merged = sorted(
        [("annotation", r) for r in annotation_records] + [("event", r) for r in event_records],
        key=lambda kv: kv[1]["seq"],
    )
    # the manifest's persisted phase_state is the t=0 value; events override
    project.manifest.phase_state = {"current_phase": 0, "status": STATE_CONFIGURED}
    for kind, record in merged:
        if kind == "annotation":
            if record["pair_id"] not in project.pairs:
                raise DanglingReference(
                    f"annotation references unknown pair {record['pair_id']!r}"
                )
            annotation = Annotation.from_dict(record)
            # stored rows are immutable; supersession is derived on replay
            annotation.superseded = False
            project._apply_annotation(annotation)
        else:
            project._apply_event(record)
        project._seq = max(project._seq, record["seq"])

    # sanity: an annotation's nli must match its case mapping
    for annotation in project.annotations:
        map_case_to_nli(annotation.case)
    return project
