"""Synthetic specification corpora with planted inconsistencies.

Generates two pseudo-documents full of templated directive sentences.
Contradictory twins share their precondition but diverge in the action
clause (different target state, a negated action, or an omitted security
step); consistent twins are paraphrases or sequencing statements; fillers
come in small families that share wording but differ in cause codes, so a
realistic share of unrelated pairs also lands inside the similarity band.
A scripted oracle annotator answers queue items from the recorded ground
truth, standing in for the domain expert.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field

from pathlib import Path
from typing import Callable

from .classifier import LabeledExample
from .corpus import CorpusProfile, build_corpus
from .pairing import PairScope, filter_boilerplate, filter_scope, generate_scope_pairs
from .taxonomy import NLILabel, map_case_to_nli

_FLIP_CASE = {1: 1, 2: 2, 3: 3, 4: 5, 5: 4, 6: 7, 7: 6}

ENTITIES = ["terminal", "gateway", "controller", "subscriber unit"]
MESSAGES = [
    "attach reject", "detach request", "service reject", "registration accept",
    "configuration update", "identity request", "authentication reject",
    "security mode command", "tracking area update", "paging notification",
    "session release", "bearer setup", "handover command", "capability inquiry",
    "status report", "resource grant", "link failure indication", "timer synchronization",
    "roaming advisory", "access barring update", "context transfer", "relocation order",
    "measurement control", "uplink grant",
]
CAUSE_WORDS = [
    "congestion", "roaming-restricted", "barred", "forbidden-zone", "expired-credentials",
    "unreachable", "overload", "maintenance", "quota-exhausted", "priority-downgrade",
    "misconfiguration", "stale-context", "radio-loss", "policy-mismatch", "degraded-link",
    "unsupported-feature", "version-skew", "throttled", "suspended", "revoked",
]
STATES = [
    "IDLE.NORMAL-SERVICE", "IDLE.LIMITED-SERVICE", "SEARCHING.PLMN-SCAN",
    "REGISTERED.NORMAL-SERVICE", "REGISTERED.UPDATE-NEEDED", "DEREGISTERED.RETRY-PENDING",
    "DEREGISTERED.NO-CELL", "SUSPENDED.BACKOFF", "CONNECTED.ACTIVE-DATA",
    "CONNECTED.SIGNALLING-ONLY", "BLOCKED.ACCESS-BARRED", "DORMANT.POWER-SAVE",
]
ACTIONS = [
    "reset the retry counter", "delete the stored routing identifier",
    "start the backoff timer", "invalidate the temporary credentials",
    "release the active bearer", "flush the pending message queue",
    "disable periodic updates", "store the received configuration",
    "suspend uplink transmission", "mark the serving cell as barred",
]
SECURITY_STEP = "erase the cached security context"
STATUS_WORDS = ["restricted", "normal", "limited", "deferred"]
PROCEDURES = [
    "emergency-attach", "periodic-update", "service-restore", "cell-reselect",
    "context-sync", "identity-refresh", "session-recovery", "priority-access",
    "fallback-select", "bearer-audit", "key-rotation", "coverage-probe",
    "slice-switch", "relay-join", "beacon-scan", "neighbor-report",
    "paging-retry", "backhaul-check", "quota-renew", "drift-correct",
    "group-rekey", "carrier-merge", "edge-handoff", "load-shed",
]
TIMER_NAMES = [
    "T3410", "T3402", "T3511", "T3421", "T3430", "T3346", "T3396", "T3447",
    "T3502", "T3512", "T3540", "T3550", "T3560", "T3570", "T3580", "T3590",
    "T3610", "T3620", "T3630", "T3640", "T3650", "T3660", "T3670", "T3680",
]
ZONE_WORDS = [
    "tracking-area", "routing-zone", "service-area", "macro-cell", "micro-cell",
    "core-segment", "edge-segment", "roaming-region", "home-region", "border-zone",
    "restricted-zone", "campus-grid", "rural-grid", "urban-grid", "transit-corridor",
    "maritime-sector",
]
# fillers reuse cause codes from a small pool so shared wording, not the
# cause token, dominates their pairwise similarity
FILLER_CAUSE_POOL = [f"#{n}" for n in range(11, 51)]


@dataclass(frozen=True)
class PlantSpec:
    """Generation parameters; counts derive from rates over the filler pool."""

    n_sections: int = 10  # leaf sections per document
    n_fillers: int = 400
    plant_rate: float = 0.1  # contradictory twins as a fraction of fillers
    decoy_rate: float = 0.1  # consistent twins as a fraction of fillers
    filler_family_size: int = 5
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.plant_rate <= 1.0 and 0.0 <= self.decoy_rate <= 1.0):
            raise ValueError("rates must be in [0, 1]")

    @property
    def n_contradictions(self) -> int:
        return round(self.plant_rate * self.n_fillers)

    @property
    def n_consistent(self) -> int:
        return round(self.decoy_rate * self.n_fillers)


@dataclass
class GroundTruth:
    """Case labels for every planted twin, keyed by normalized text."""

    twins: list[dict] = field(default_factory=list)  # {text_1, text_2, case, kind}
    _index: dict[frozenset, tuple[str, int]] = field(default_factory=dict, repr=False)

    @staticmethod
    def _norm(text: str) -> str:
        return re.sub(r"\s+", " ", text).strip()

    def add(self, text_1: str, text_2: str, case: int, kind: str) -> None:
        self.twins.append({"text_1": text_1, "text_2": text_2, "case": case, "kind": kind})
        key = frozenset((self._norm(text_1), self._norm(text_2)))
        self._index[key] = (self._norm(text_1), case)

    def case_for(self, premise: str, hypothesis: str) -> int | None:
        """Case oriented so `premise` plays the twin's text_1 role."""
        key = frozenset((self._norm(premise), self._norm(hypothesis)))
        hit = self._index.get(key)
        if hit is None:
            return None
        text_1, case = hit
        return case if self._norm(premise) == text_1 else _FLIP_CASE[case]

    def to_records(self) -> list[dict]:
        return list(self.twins)


def _directive(entity: str, message: str, cause: str, cause_word: str,
               action: str, status: str, state: str, extra: str = "") -> str:
    return (
        f"When the {entity} receives a {message} message with the cause {cause} "
        f"({cause_word}), the {entity} shall {action}, set the update status to "
        f"{status},{extra} and enter the state {state}."
    )


def generate_corpus(spec: PlantSpec) -> tuple[dict[str, str], GroundTruth]:
    """Emit two documents plus the ground truth for every planted twin."""
    rng = random.Random(spec.seed)
    truth = GroundTruth()
    paragraphs: list[str] = []

    cause_counter = 200  # twins get globally unique causes, above the filler pool

    def fresh_combo():
        nonlocal cause_counter
        cause_counter += 1
        return (
            rng.choice(ENTITIES),
            rng.choice(MESSAGES),
            f"#{cause_counter}",
            rng.choice(CAUSE_WORDS),
            rng.choice(ACTIONS),
            rng.choice(STATUS_WORDS),
            rng.choice(STATES),
        )

    # filler families: shared wording except the cause code, so each family's
    # pairs land inside the band while still being unrelated events (case 3)
    n_families = max(1, spec.n_fillers // spec.filler_family_size)
    produced = 0
    for _ in range(n_families):
        entity, message, _, _, action, status, state = fresh_combo()
        tail = (
            f" This rule applies to the {rng.choice(PROCEDURES)} procedure of the "
            f"{rng.choice(ZONE_WORDS)} while the {rng.choice(TIMER_NAMES)} timer is running."
        )
        family_size = min(spec.filler_family_size, spec.n_fillers - produced)
        if family_size <= 0:
            break
        causes = rng.sample(FILLER_CAUSE_POOL, family_size)
        cause_words = rng.sample(CAUSE_WORDS, family_size)
        for cause, cause_word in zip(causes, cause_words):
            text = _directive(entity, message, cause, cause_word, action, status, state) + tail
            paragraphs.append(text)
            produced += 1
    while produced < spec.n_fillers:
        entity, message, cause, cause_word, action, status, state = fresh_combo()
        paragraphs.append(_directive(entity, message, cause, cause_word, action, status, state))
        produced += 1

    # contradictory twins: identical precondition, diverging consequence
    for i in range(spec.n_contradictions):
        entity, message, cause, cause_word, action, status, state = fresh_combo()
        base = _directive(entity, message, cause, cause_word, action, status, state)
        pattern = i % 3
        if pattern == 0:  # different target state
            other_state = rng.choice([s for s in STATES if s != state])
            twin = _directive(entity, message, cause, cause_word, action, status, other_state)
            case = 2
        elif pattern == 1:  # negated action
            twin = _directive(
                entity, message, cause, cause_word, f"not {action}", status, state
            )
            case = 2
        else:  # omitted security step: base carries more detail
            base = _directive(
                entity, message, cause, cause_word, action, status, state,
                extra=f" {SECURITY_STEP},",
            )
            twin = _directive(entity, message, cause, cause_word, action, status, state)
            case = 6
        paragraphs.append(base)
        paragraphs.append(twin)
        truth.add(base, twin, case, "contradiction")

    # consistent twins: paraphrases and sequencing statements
    for i in range(spec.n_consistent):
        entity, message, cause, cause_word, action, status, state = fresh_combo()
        base = _directive(entity, message, cause, cause_word, action, status, state)
        if i % 2 == 0:  # paraphrase
            twin = (
                f"When the {entity} obtains a {message} message with the cause {cause} "
                f"({cause_word}), it must {action}, set the update status to {status}, "
                f"and move to the state {state}."
            )
            case = 1
        else:  # explicit ordering of the same behavior
            twin = (
                f"Upon reception of a {message} message with the cause {cause} "
                f"({cause_word}), the {entity} shall first {action} and afterwards "
                f"enter the state {state} with the update status {status}."
            )
            case = 4
        paragraphs.append(base)
        paragraphs.append(twin)
        truth.add(base, twin, case, "consistent")

    rng.shuffle(paragraphs)
    half = len(paragraphs) // 2
    documents = {
        "nas": _render_document("Mobility Procedures", paragraphs[:half], spec.n_sections, rng),
        "sec": _render_document("Security Procedures", paragraphs[half:], spec.n_sections, rng),
    }
    return documents, truth


def _render_document(title: str, paragraphs: list[str], n_sections: int, rng: random.Random) -> str:
    """Lay paragraphs out under numbered sections 4..8 with front matter."""
    lines = [
        "1 Scope",
        "",
        f"This document describes {title.lower()} for a synthetic radio system.",
        "",
        "2 References",
        "",
        "[1] TS 90.001",
        "TS 91.002",
        "",
        "3 Definitions",
        "",
        "Table 3-1: Abbreviations used in this document",
        "ABC\t\tAlways Be Checking",
        "",
    ]
    n_sections = max(1, n_sections)
    per_section = max(1, -(-len(paragraphs) // n_sections))
    section_index = 0
    for start in range(0, len(paragraphs), per_section):
        top = 4 + (section_index * 5) // n_sections  # spread over sections 4..8
        sub = section_index % 97 + 1
        lines.append(f"{top}.{sub} {title} part {section_index + 1}")
        lines.append("")
        for paragraph in paragraphs[start : start + per_section]:
            lines.append(paragraph)
            lines.append("")
        section_index += 1
    return "\n".join(lines)


def oracle_annotator(queue_item: dict, truth: GroundTruth) -> int:
    """The scripted expert: planted twins get their case, fillers get 3."""
    premise = queue_item["segment_a"]["text"]
    hypothesis = queue_item["segment_b"]["text"]
    case = truth.case_for(premise, hypothesis)
    return case if case is not None else 3


def seed_examples(spec: PlantSpec, per_class: int = 20) -> list[LabeledExample]:
    """Generic labeled pairs for phase-0 bootstrap, disjoint from the corpus."""
    rng = random.Random(spec.seed + 104729)
    out: list[LabeledExample] = []
    counter = 0

    def combo(cause_base: int):
        return (
            rng.choice(ENTITIES),
            rng.choice(MESSAGES),
            f"#{cause_base}",
            rng.choice(CAUSE_WORDS),
            rng.choice(ACTIONS),
            rng.choice(STATUS_WORDS),
            rng.choice(STATES),
        )

    for i in range(per_class):
        # entailment: paraphrase
        entity, message, cause, cause_word, action, status, state = combo(900 + counter)
        counter += 1
        premise = _directive(entity, message, cause, cause_word, action, status, state)
        hypothesis = (
            f"When the {entity} obtains a {message} message with the cause {cause} "
            f"({cause_word}), it must {action}, set the update status to {status}, "
            f"and move to the state {state}."
        )
        out.append(
            LabeledExample(f"seed-ent-{i}", premise, hypothesis, NLILabel.ENTAILMENT, "seed")
        )

        # contradiction: state swap or negation
        entity, message, cause, cause_word, action, status, state = combo(900 + counter)
        counter += 1
        premise = _directive(entity, message, cause, cause_word, action, status, state)
        if i % 2 == 0:
            other = rng.choice([s for s in STATES if s != state])
            hypothesis = _directive(entity, message, cause, cause_word, action, status, other)
        else:
            hypothesis = _directive(entity, message, cause, cause_word, f"not {action}", status, state)
        out.append(
            LabeledExample(f"seed-con-{i}", premise, hypothesis, NLILabel.CONTRADICTION, "seed")
        )

        # neutral: unrelated directives
        entity, message, cause, cause_word, action, status, state = combo(900 + counter)
        counter += 1
        premise = _directive(entity, message, cause, cause_word, action, status, state)
        entity2, message2, cause2, cause_word2, action2, status2, state2 = combo(900 + counter)
        counter += 1
        hypothesis = _directive(entity2, message2, cause2, cause_word2, action2, status2, state2)
        out.append(
            LabeledExample(f"seed-neu-{i}", premise, hypothesis, NLILabel.NEUTRAL, "seed")
        )
    return out


def resolve_twin_pairs(project, truth: GroundTruth) -> dict[str, int]:
    """Map planted twins to project pair ids (only those inside the band)."""
    by_text: dict[str, list[str]] = {}
    for segment in project.segments_by_id.values():
        by_text.setdefault(GroundTruth._norm(segment.text), []).append(segment.segment_id)

    resolved: dict[str, int] = {}
    for twin in truth.twins:
        ids_1 = by_text.get(GroundTruth._norm(twin["text_1"]), [])
        ids_2 = by_text.get(GroundTruth._norm(twin["text_2"]), [])
        for sid_1 in ids_1:
            for sid_2 in ids_2:
                a, b = sorted((sid_1, sid_2))
                pair_id = f"{a}|{b}"
                pos = project.pairs.get(pair_id)
                if pos is None:
                    continue
                seg_a_text = GroundTruth._norm(project.segment_text(pos.segment_a))
                case = twin["case"]
                if seg_a_text != GroundTruth._norm(twin["text_1"]):
                    case = _FLIP_CASE[case]
                resolved[pair_id] = case
    return resolved


def build_synthetic_project(
    path: str | Path,
    spec: PlantSpec,
    member_seeds: tuple[int, ...] = (11, 23, 47),
    band: tuple[float, float] = (0.65, 0.99),
    k_phases: int = 3,
    sample_size: int = 150,
    confidence_threshold: float = 0.6,
    gold_fraction: float = 0.5,
    n_filler_gold: int = 100,
    training: dict | None = None,
    eda_seed: int = 0,
    clock: Callable[[], str] | None = None,
    max_pattern_count: int = 3,
):
    """End-to-end project setup over a generated corpus.

    Ingests and segments both pseudo-documents, pairs and band-filters
    them, registers seed examples and a held-out gold set, and leaves the
    project in the 'paired' state ready for phase 0. Returns
    (project, ground_truth).
    """
    from .augment import EdaParams
    from .store import STATE_PAIRED, ProjectManifest, init_project, utc_now

    documents, truth = generate_corpus(spec)
    profiles = [
        CorpusProfile(corpus_id="nas", section_range=(4, 5, 6, 7, 8)),
        CorpusProfile(corpus_id="sec", section_range=(4, 5, 6, 7, 8)),
    ]
    scope = PairScope(
        name="all", corpus_pairs=(("nas", "nas"), ("nas", "sec"), ("sec", "sec"))
    )
    members = [
        {"kind": "native", "model_id": f"member-{i}", "seed": seed, "training": training}
        for i, seed in enumerate(member_seeds)
    ]
    manifest = ProjectManifest(
        project_id=f"synth-{spec.seed}",
        created_at=utc_now() if clock is None else clock(),
        corpora=profiles,
        scopes=[scope],
        bands={"all": band},
        members=members,
        k_phases=k_phases,
        sample_size=sample_size,
        confidence_threshold=confidence_threshold,
        eda=EdaParams(seed=eda_seed),
    )
    kwargs = {"clock": clock} if clock is not None else {}
    project = init_project(path, manifest, **kwargs)
    for corpus_id, profile in zip(("nas", "sec"), profiles):
        project.save_corpus_text(corpus_id, documents[corpus_id])
        corpus = build_corpus(documents[corpus_id], profile)
        project.save_segments(corpus_id, corpus.segments)

    scope_pairs = generate_scope_pairs(scope, project.segments)
    survivors, summary = filter_scope(scope_pairs, band[0], band[1])
    survivors = filter_boilerplate(survivors, project.segment_text, max_pattern_count)
    project.save_pairs("all", survivors, summary)
    project.set_phase_state(0, STATE_PAIRED)

    project.set_seeds(seed_examples(spec))
    gold = designate_gold(
        project, truth, fraction=gold_fraction, n_filler_gold=n_filler_gold, seed=spec.seed
    )
    project.set_gold(gold)
    return project, truth


def designate_gold(
    project,
    truth: GroundTruth,
    fraction: float = 0.5,
    n_filler_gold: int = 100,
    seed: int = 0,
) -> dict[str, int]:
    """Reserve an evaluation subset: a fraction of twins plus filler pairs.

    Gold pairs are excluded from annotation sampling, so they stay a clean
    held-out test bed for per-phase metrics.
    """
    rng = random.Random(seed)
    twin_cases = resolve_twin_pairs(project, truth)

    gold: dict[str, int] = {}
    by_kind: dict[str, list[str]] = {"contradiction": [], "consistent": []}
    for pair_id, case in sorted(twin_cases.items()):
        kind = "contradiction" if map_case_to_nli(case) is NLILabel.CONTRADICTION else "consistent"
        by_kind[kind].append(pair_id)
    for kind, ids in by_kind.items():
        take = round(fraction * len(ids))
        rng.shuffle(ids)
        for pair_id in ids[:take]:
            gold[pair_id] = twin_cases[pair_id]

    filler_candidates = sorted(
        pid for pid, pos in project.pairs.items()
        if pid not in twin_cases and pos.status == "candidate"
    )
    rng.shuffle(filler_candidates)
    for pair_id in filler_candidates[:n_filler_gold]:
        gold[pair_id] = 3
    return gold
