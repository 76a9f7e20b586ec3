"""Multi-phase informed fine-tuning loop and evaluation metrics.

One phase = predict with every ensemble member, vote, sample the most
informative pairs for human rectification, halt until the annotations
arrive, then retrain on all accumulated human labels plus EDA synthetics,
re-predict, and score against the held-out gold set. Phase 0 is the
bootstrap: members train on designated seed examples without sampling.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import datetime

import numpy as np

from .augment import EdaParams, SynonymLexicon, synthesize_training_pos
from .classifier import (
    DEFAULT_FEATURE_BUCKETS,
    BackendClient,
    BackendEndpoint,
    BaselineModel,
    LabeledExample,
    Prediction,
    TrainingConfig,
    featurize_pair,
    predict_baseline,
    train_baseline,
)
from .ensemble import EnsembleDecision, majority_vote, select_high_confidence
from .errors import AnnotationIncomplete, EmptyClass, InsufficientCandidates, MissingGold, WrongPhase
from .pairing import STATUS_CANDIDATE, PoS
from .store import (
    STATE_AWAITING,
    STATE_FINISHED,
    STATE_PAIRED,
    STATE_PHASE_COMPLETE,
    Project,
)
from .taxonomy import NLI_LABELS, NLILabel, map_case_to_nli
from .vectorspace import Vocabulary, build_vocabulary

SAMPLING_STRATEGIES = ("uncertainty_stratified", "random_stratified", "random")


@dataclass
class PhaseConfig:
    phase_index: int
    sample_size: int = 150
    augment: EdaParams = field(default_factory=EdaParams)
    confidence_threshold: float = 0.6
    sampling_strategy: str = "uncertainty_stratified"
    sampling_seed: int = 0
    continue_from_previous: bool = True

    def __post_init__(self):
        if self.sampling_strategy not in SAMPLING_STRATEGIES:
            raise ValueError(f"unknown sampling strategy {self.sampling_strategy!r}")


@dataclass
class Metrics:
    """Per-class and macro precision/recall/F1 plus accuracy.

    Macro scores are unweighted means over the three classes; a class with
    no gold support contributes 0 and is listed in no_support.
    """

    confusion: np.ndarray  # [gold, predicted]
    per_class: dict[str, dict[str, float]]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    accuracy: float
    no_support: list[str]

    def to_dict(self) -> dict:
        return {
            "confusion": self.confusion.tolist(),
            "per_class": self.per_class,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "accuracy": self.accuracy,
            "no_support": self.no_support,
        }


def evaluate(predicted: dict[str, NLILabel], gold: dict[str, NLILabel]) -> Metrics:
    """Score predictions against gold labels over the gold pair set."""
    if not gold:
        raise MissingGold("empty gold set")
    confusion = np.zeros((3, 3), dtype=int)
    index = {label: i for i, label in enumerate(NLI_LABELS)}
    for pair_id, gold_label in gold.items():
        if pair_id not in predicted:
            raise MissingGold(f"no prediction for gold pair {pair_id!r}")
        confusion[index[gold_label], index[predicted[pair_id]]] += 1

    per_class: dict[str, dict[str, float]] = {}
    no_support: list[str] = []
    precisions, recalls, f1s = [], [], []
    for i, label in enumerate(NLI_LABELS):
        support = int(confusion[i, :].sum())
        predicted_count = int(confusion[:, i].sum())
        tp = int(confusion[i, i])
        precision = tp / predicted_count if predicted_count else 0.0
        recall = tp / support if support else 0.0
        f1 = 2 * precision * recall / (precision + recall) if (precision + recall) else 0.0
        if support == 0:
            no_support.append(label.value)
        per_class[label.value] = {
            "precision": precision,
            "recall": recall,
            "f1": f1,
            "support": support,
        }
        precisions.append(precision)
        recalls.append(recall)
        f1s.append(f1)

    total = int(confusion.sum())
    return Metrics(
        confusion=confusion,
        per_class=per_class,
        macro_precision=sum(precisions) / 3,
        macro_recall=sum(recalls) / 3,
        macro_f1=sum(f1s) / 3,
        accuracy=float(np.trace(confusion)) / total if total else 0.0,
        no_support=no_support,
    )


# ----------------------------------------------------------------------
# ensemble members
# ----------------------------------------------------------------------
class NativeMember:
    """Baseline soft-max classifier member, trained in-process."""

    def __init__(self, model_id: str, seed: int, training: dict | None = None):
        self.model_id = model_id
        self.seed = seed
        self.training_overrides = training or {}
        self.model: BaselineModel | None = None

    def _config(self, phase: int) -> TrainingConfig:
        options = {"seed": self.seed * 1000 + phase}
        options.update(self.training_overrides)
        return TrainingConfig(**options)

    def fit(
        self,
        examples: list[LabeledExample],
        vocab: Vocabulary,
        phase: int,
        features: dict[str, np.ndarray] | None = None,
        continue_from_previous: bool = True,
    ) -> None:
        initial = self.model if continue_from_previous else None
        self.model = train_baseline(
            examples, vocab, self._config(phase), initial=initial, features=features
        )

    def predict_many(
        self,
        pairs: list[tuple[str, str, str]],
        vocab: Vocabulary,
        phase: int,
        features: dict[str, np.ndarray] | None = None,
    ) -> list[Prediction]:
        if self.model is None:
            # untrained member: uniform probabilities (zero weights)
            self.model = zero_model(
                self.training_overrides.get("feature_buckets", DEFAULT_FEATURE_BUCKETS)
            )
        out = []
        for pair_id, premise, hypothesis in pairs:
            vector = features.get(pair_id) if features else None
            out.append(
                predict_baseline(
                    self.model,
                    premise,
                    hypothesis,
                    vocab,
                    pair_id=pair_id,
                    model_id=self.model_id,
                    phase=phase,
                    feature_vector=vector,
                )
            )
        return out

    def state_dict(self) -> dict | None:
        return self.model.to_dict() if self.model else None

    def load_state(self, payload: dict) -> None:
        self.model = BaselineModel.from_dict(payload)


def zero_model(feature_buckets: int = DEFAULT_FEATURE_BUCKETS) -> BaselineModel:
    from .classifier import feature_dim

    config = TrainingConfig(seed=0, epochs=0, feature_buckets=feature_buckets)
    return BaselineModel(
        weights=np.zeros((3, feature_dim(feature_buckets))),
        bias=np.zeros(3),
        class_w=np.full(3, 1 / 3),
        config=config,
    )


class BackendMember:
    """Ensemble member proxied over the classifier wire protocol."""

    def __init__(self, model_id: str, endpoint: BackendEndpoint, train_config: dict | None = None):
        self.model_id = model_id
        self.client = BackendClient(endpoint)
        self.train_config = train_config or {}

    def ensure_available(self) -> None:
        self.client.health()

    def fit(self, examples, vocab, phase, features=None, continue_from_previous=True) -> None:
        config = {"seed": phase, **self.train_config}
        self.client.train(examples, config)

    def predict_many(self, pairs, vocab, phase, features=None) -> list[Prediction]:
        return self.client.predict_batch(pairs, phase=phase)

    def state_dict(self) -> dict | None:
        return None

    def load_state(self, payload: dict) -> None:
        raise NotImplementedError("backend members keep their own state")


def build_member(descriptor: dict):
    kind = descriptor.get("kind", "native")
    if kind == "native":
        return NativeMember(
            model_id=descriptor["model_id"],
            seed=descriptor.get("seed", 0),
            training=descriptor.get("training"),
        )
    if kind == "backend":
        endpoint = BackendEndpoint(
            base_url=descriptor["base_url"],
            model_id=descriptor["model_id"],
            timeout=descriptor.get("timeout", 30.0),
            retries=descriptor.get("retries", 2),
        )
        return BackendMember(descriptor["model_id"], endpoint, descriptor.get("train_config"))
    raise ValueError(f"unknown member kind {kind!r}")


# ----------------------------------------------------------------------
# sampling
# ----------------------------------------------------------------------
def _allocate_proportionally(n: int, sizes: list[int]) -> list[int]:
    """Floor-proportional allocation; remainders go to the largest stratum."""
    total = sum(sizes)
    base = [n * size // total for size in sizes]
    leftover = n - sum(base)
    if leftover:
        base[max(range(len(sizes)), key=lambda i: sizes[i])] += leftover
    # cap at stratum size, spilling any deficit to the biggest leftover room
    deficit = 0
    for i, size in enumerate(sizes):
        if base[i] > size:
            deficit += base[i] - size
            base[i] = size
    while deficit:
        room = [(sizes[i] - base[i], i) for i in range(len(sizes))]
        room.sort(reverse=True)
        space, i = room[0]
        if space <= 0:
            break
        take = min(space, deficit)
        base[i] += take
        deficit -= take
    return base


def sample_for_annotation(
    decisions: list[EnsembleDecision],
    n: int,
    strategy: str = "uncertainty_stratified",
    seed: int = 0,
    exclude: set[str] | None = None,
) -> list[EnsembleDecision]:
    """Pick n pairs for human review; returns them in queue order.

    uncertainty_stratified stratifies by the ensemble's predicted label,
    ranks by prediction entropy (descending) inside each stratum, and
    allocates proportionally to stratum sizes.
    """
    if strategy not in SAMPLING_STRATEGIES:
        raise ValueError(f"unknown sampling strategy {strategy!r}")
    exclude = exclude or set()
    pool = [d for d in decisions if d.pair_id not in exclude]
    if len(pool) < n:
        raise InsufficientCandidates(f"need {n} candidates, only {len(pool)} available")

    rng = np.random.default_rng(seed)
    if strategy == "random":
        order = rng.permutation(len(pool))
        return [pool[i] for i in order[:n]]

    strata: dict[str, list[EnsembleDecision]] = {}
    for decision in pool:
        strata.setdefault(decision.final.value, []).append(decision)
    names = sorted(strata)
    sizes = [len(strata[name]) for name in names]
    allocation = _allocate_proportionally(n, sizes)

    sampled: list[EnsembleDecision] = []
    for name, take in zip(names, allocation):
        members = strata[name]
        if strategy == "uncertainty_stratified":
            members = sorted(members, key=lambda d: (-d.entropy(), d.pair_id))
            sampled.extend(members[:take])
        else:  # random_stratified
            order = rng.permutation(len(members))
            sampled.extend(members[i] for i in order[:take])

    if strategy == "uncertainty_stratified":
        sampled.sort(key=lambda d: (-d.entropy(), d.pair_id))
    return sampled


# ----------------------------------------------------------------------
# phase runner
# ----------------------------------------------------------------------
@dataclass
class PhaseOutcome:
    status: str  # "awaiting_annotation" | "complete"
    phase: int
    pending: int = 0
    report: dict | None = None


class EnsembleRunner:
    """Holds the members, the shared vocabulary, and a feature cache."""

    def __init__(self, project: Project, lexicon: SynonymLexicon | None = None):
        self.project = project
        all_segments = [s for segs in project.segments.values() for s in segs]
        self.vocab = build_vocabulary(all_segments)
        self.members = [build_member(d) for d in project.manifest.members]
        self.lexicon = lexicon or SynonymLexicon.bundled()
        bucket_sizes = {
            member.training_overrides.get("feature_buckets", DEFAULT_FEATURE_BUCKETS)
            for member in self.members
            if isinstance(member, NativeMember)
        }
        if len(bucket_sizes) > 1:
            raise ValueError("native members must agree on feature_buckets")
        self.feature_buckets = bucket_sizes.pop() if bucket_sizes else DEFAULT_FEATURE_BUCKETS
        self._features: dict[str, np.ndarray] = {}
        self._restore_members()

    def _restore_members(self) -> None:
        state = self.project.manifest.phase_state
        for phase in range(state["current_phase"], -1, -1):
            directory = self.project.phase_dir(phase) / "models"
            if not directory.exists():
                continue
            for member in self.members:
                payload_path = directory / f"{member.model_id}.json"
                if payload_path.exists() and member.state_dict() is None:
                    member.load_state(json.loads(payload_path.read_text(encoding="utf-8")))
            if all(
                not isinstance(m, NativeMember) or m.model is not None for m in self.members
            ):
                break

    def pair_texts(self, pos: PoS) -> tuple[str, str]:
        return self.project.segment_text(pos.segment_a), self.project.segment_text(pos.segment_b)

    def features_for(self, pos: PoS) -> np.ndarray:
        if pos.pair_id not in self._features:
            premise, hypothesis = self.pair_texts(pos)
            self._features[pos.pair_id] = featurize_pair(
                premise, hypothesis, self.vocab, self.feature_buckets
            ).vector
        return self._features[pos.pair_id]

    def predict_decisions(self, phase: int) -> tuple[list[EnsembleDecision], dict[str, list[Prediction]]]:
        pairs = self.project.candidate_pairs()
        triples = []
        features = {}
        for pos in pairs:
            premise, hypothesis = self.pair_texts(pos)
            triples.append((pos.pair_id, premise, hypothesis))
            features[pos.pair_id] = self.features_for(pos)
        per_member = {
            member.model_id: member.predict_many(triples, self.vocab, phase, features)
            for member in self.members
        }
        decisions = []
        by_pair: dict[str, list[Prediction]] = {}
        for model_id, predictions in per_member.items():
            for prediction in predictions:
                by_pair.setdefault(prediction.pair_id, []).append(prediction)
        for pos in pairs:
            decisions.append(majority_vote(by_pair[pos.pair_id]))
        return decisions, per_member

    def fit_all(self, examples: list[LabeledExample], phase: int, continue_from_previous: bool) -> None:
        features = {
            e.pair_id: self._features[e.pair_id] for e in examples if e.pair_id in self._features
        }
        for member in self.members:
            member.fit(
                examples,
                self.vocab,
                phase,
                features=features,
                continue_from_previous=continue_from_previous,
            )


def _train_examples_from_annotations(project: Project, up_to_phase: int) -> list[LabeledExample]:
    examples = []
    for annotation in project.active_annotations(up_to_phase):
        pos = project.pairs[annotation.pair_id]
        examples.append(
            LabeledExample(
                pair_id=annotation.pair_id,
                premise=project.segment_text(pos.segment_a),
                hypothesis=project.segment_text(pos.segment_b),
                label=map_case_to_nli(annotation.case),
                origin="human",
            )
        )
    return examples


def _gold_nli(project: Project) -> dict[str, NLILabel]:
    return {pair_id: map_case_to_nli(case) for pair_id, case in project.gold.items()}


def _evaluate_members(
    per_member: dict[str, list[Prediction]],
    decisions: list[EnsembleDecision],
    gold: dict[str, NLILabel],
) -> tuple[dict[str, Metrics], Metrics]:
    member_metrics = {}
    for model_id, predictions in per_member.items():
        predicted = {p.pair_id: p.label for p in predictions}
        member_metrics[model_id] = evaluate(predicted, gold)
    ensemble_metrics = evaluate({d.pair_id: d.final for d in decisions}, gold)
    return member_metrics, ensemble_metrics


def _duration_seconds(started: str, finished: str) -> float:
    fmt = "%Y-%m-%dT%H:%M:%S.%fZ"
    try:
        delta = datetime.strptime(finished, fmt) - datetime.strptime(started, fmt)
        return delta.total_seconds()
    except ValueError:
        return 0.0


def run_phase(project: Project, config: PhaseConfig, runner: EnsembleRunner) -> PhaseOutcome:
    """Advance the active-learning loop by one step.

    Returns awaiting_annotation after sampling a fresh phase; returns the
    completed PhaseReport after retraining a fully annotated one.
    """
    phase = config.phase_index
    state = project.manifest.phase_state
    started = project.clock()
    for member in runner.members:
        if hasattr(member, "ensure_available"):
            member.ensure_available()  # raises BackendUnavailable up front

    if phase == 0:
        if not (state["status"] in (STATE_PAIRED,) and state["current_phase"] == 0):
            raise WrongPhase(f"phase 0 requires state 'paired', found {project.phase_label()}")
        if not project.seeds:
            raise EmptyClass("phase 0 needs seed-origin examples")
        runner.fit_all(project.seeds, 0, continue_from_previous=False)
        return _complete_phase(project, config, runner, train_human=0, started=started)

    if state["status"] == STATE_AWAITING and state["current_phase"] == phase:
        pending = project.pending_pairs(phase)
        if pending:
            raise AnnotationIncomplete(
                f"{len(pending)} sampled pair(s) still pending annotation",
                pending=len(pending),
            )
        return _resume_phase(project, config, runner, started)

    if not (state["status"] == STATE_PHASE_COMPLETE and state["current_phase"] == phase - 1):
        raise WrongPhase(
            f"phase {phase} cannot start from state {project.phase_label()}"
        )

    decisions, _ = runner.predict_decisions(phase)
    already_annotated = {a.pair_id for a in project.annotations}
    exclude = already_annotated | set(project.gold)
    sampled = sample_for_annotation(
        decisions,
        config.sample_size,
        strategy=config.sampling_strategy,
        seed=config.sampling_seed,
        exclude=exclude,
    )
    items = [
        {
            "pair_id": d.pair_id,
            "label": d.final.value,
            "probs": {label.value: p for label, p in d.mean_probs.items()},
            "confidence": d.confidence,
        }
        for d in sampled
    ]
    project.append_event({"type": "phase_sample", "phase": phase, "items": items})
    project.set_phase_state(phase, STATE_AWAITING)
    return PhaseOutcome(status="awaiting_annotation", phase=phase, pending=len(items))


def _resume_phase(
    project: Project, config: PhaseConfig, runner: EnsembleRunner, started: str
) -> PhaseOutcome:
    phase = config.phase_index
    human = _train_examples_from_annotations(project, phase)
    if not human:
        raise AnnotationIncomplete("no annotations to train on", pending=0)
    eda = EdaParams(
        alpha_sr=config.augment.alpha_sr,
        alpha_ri=config.augment.alpha_ri,
        alpha_rs=config.augment.alpha_rs,
        p_rd=config.augment.p_rd,
        n_aug=config.augment.n_aug,
        seed=config.augment.seed + phase,
    )
    synthetic = synthesize_training_pos(human, eda, runner.lexicon)
    trainset = human + synthetic
    # a class no human annotation covered yet borrows its seed examples,
    # otherwise the weighted loss would be undefined for that class
    covered = {example.label for example in trainset}
    for label in NLI_LABELS:
        if label not in covered:
            borrowed = [s for s in project.seeds if s.label is label]
            trainset.extend(borrowed)
    project.write_phase_trainset(phase, trainset)
    runner.fit_all(trainset, phase, continue_from_previous=config.continue_from_previous)
    return _complete_phase(project, config, runner, train_human=len(human), started=started)


def _complete_phase(
    project: Project,
    config: PhaseConfig,
    runner: EnsembleRunner,
    train_human: int,
    started: str,
) -> PhaseOutcome:
    phase = config.phase_index
    decisions, per_member = runner.predict_decisions(phase)
    gold = _gold_nli(project)
    member_metrics, ensemble_metrics = _evaluate_members(per_member, decisions, gold)

    results = select_high_confidence(decisions, config.confidence_threshold)
    selectable = [
        d.pair_id for d in results if project.pairs[d.pair_id].status == STATUS_CANDIDATE
    ]
    if selectable:
        project.append_event({"type": "results", "phase": phase, "pair_ids": selectable})

    project.write_phase_decisions(phase, decisions)
    for member in runner.members:
        payload = member.state_dict()
        if payload is not None:
            project.write_phase_model(phase, member.model_id, payload)

    finished = project.clock()
    synthetic_size = math.ceil(train_human / 10) if train_human else 0
    report = {
        "phase_index": phase,
        "train_size": train_human,
        "synthetic_size": synthetic_size,
        "metrics_per_model": {mid: m.to_dict() for mid, m in member_metrics.items()},
        "metrics_ensemble": ensemble_metrics.to_dict(),
        "decisions_path": str(
            (project.phase_dir(phase) / "decisions.jsonl").relative_to(project.path)
        ),
        "results_selected": len(results),
        "confidence_threshold": config.confidence_threshold,
        "duration_seconds": _duration_seconds(started, finished),
        "started_at": started,
        "finished_at": finished,
    }
    project.write_phase_report(phase, report)
    project.set_phase_state(phase, STATE_PHASE_COMPLETE)
    if phase >= project.manifest.k_phases:
        project.set_phase_state(phase, STATE_FINISHED)
    return PhaseOutcome(status="complete", phase=phase, report=report)


def apply_triage(project: Project, pair_id: str, status: str) -> tuple[str, int, int]:
    """Record a manual triage verdict for a predicted result pair.

    Returns (new status, confirmed count, context_fp count). The CLI and
    the HTTP API both route through here so either surface emits the same
    store event for the same action.
    """
    from .errors import SpeclintError, UnknownPair
    from .pairing import STATUS_PREDICTED, STATUS_TRIAGED_CONFIRMED, STATUS_TRIAGED_CONTEXT_FP

    if status not in ("confirmed", "context_fp"):
        raise SpeclintError(f"triage status must be confirmed|context_fp, got {status!r}")
    pos = project.pairs.get(pair_id)
    if pos is None:
        raise UnknownPair(f"no such pair {pair_id!r}")
    result_statuses = (STATUS_PREDICTED, STATUS_TRIAGED_CONFIRMED, STATUS_TRIAGED_CONTEXT_FP)
    if pos.status not in result_statuses:
        raise SpeclintError(f"pair {pair_id!r} is not a predicted result")
    new_status = (
        STATUS_TRIAGED_CONFIRMED if status == "confirmed" else STATUS_TRIAGED_CONTEXT_FP
    )
    if pos.status != new_status:
        project.append_event({"type": "status_change", "pair_id": pair_id, "status": new_status})
    confirmed = sum(
        1
        for p in project.pairs.values()
        if p.status in (STATUS_PREDICTED, STATUS_TRIAGED_CONFIRMED)
    )
    context_fp = sum(1 for p in project.pairs.values() if p.status == STATUS_TRIAGED_CONTEXT_FP)
    return new_status, confirmed, context_fp


def phase_config_from_manifest(project: Project, phase_index: int) -> PhaseConfig:
    manifest = project.manifest
    return PhaseConfig(
        phase_index=phase_index,
        sample_size=manifest.sample_size,
        augment=manifest.eda,
        confidence_threshold=manifest.confidence_threshold,
        sampling_strategy=manifest.sampling_strategy,
        sampling_seed=manifest.eda.seed + phase_index,
    )
