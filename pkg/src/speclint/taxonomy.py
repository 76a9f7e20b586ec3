"""Three-tier label taxonomy: 7 annotation cases -> 3 NLI labels -> binary verdict.

Cases:
  1  a = b           consistent statements
  2  a != b          inconsistent statements
  3  a (x) b         unrelated
  4  a -> b          related, a happens before b
  5  a <- b          related, b happens before a
  6  a ) b           a contains more/detailed information
  7  a ( b           b contains more/detailed information
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

VALID_CASES = (1, 2, 3, 4, 5, 6, 7)

ENTAILMENT_CASES = frozenset({1, 4, 5})
CONTRADICTION_CASES = frozenset({2, 6, 7})
NEUTRAL_CASES = frozenset({3})


class NLILabel(str, Enum):
    ENTAILMENT = "entailment"
    CONTRADICTION = "contradiction"
    NEUTRAL = "neutral"


NLI_LABELS = (NLILabel.ENTAILMENT, NLILabel.CONTRADICTION, NLILabel.NEUTRAL)


class ConsistencyVerdict(str, Enum):
    CONSISTENT = "consistent"
    INCONSISTENT = "inconsistent"


def validate_case(case: int) -> int:
    if case not in VALID_CASES:
        raise ValueError(f"case must be in 1..7, got {case!r}")
    return case


def map_case_to_nli(case: int) -> NLILabel:
    validate_case(case)
    if case in ENTAILMENT_CASES:
        return NLILabel.ENTAILMENT
    if case in CONTRADICTION_CASES:
        return NLILabel.CONTRADICTION
    return NLILabel.NEUTRAL


def map_nli_to_consistency(label: NLILabel) -> ConsistencyVerdict:
    # only contradictions count as inconsistencies; unrelated pairs are
    # consistent by definition (they describe different events)
    if label is NLILabel.CONTRADICTION:
        return ConsistencyVerdict.INCONSISTENT
    return ConsistencyVerdict.CONSISTENT


def case_verdict(case: int) -> ConsistencyVerdict:
    return map_nli_to_consistency(map_case_to_nli(case))


@dataclass
class Annotation:
    """One expert-submitted case label for a pair within a phase.

    Later submissions for the same (pair, phase) supersede earlier ones;
    superseded rows stay in the audit log with superseded=True.
    """

    pair_id: str
    case: int
    annotator: str
    phase: int
    timestamp: str
    replaced_prediction: str | None = None
    superseded: bool = False

    @property
    def nli(self) -> NLILabel:
        return map_case_to_nli(self.case)

    def to_dict(self) -> dict:
        return {
            "pair_id": self.pair_id,
            "case": self.case,
            "nli": self.nli.value,
            "annotator": self.annotator,
            "phase": self.phase,
            "timestamp": self.timestamp,
            "replaced_prediction": self.replaced_prediction,
            "superseded": self.superseded,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Annotation":
        return cls(
            pair_id=d["pair_id"],
            case=d["case"],
            annotator=d["annotator"],
            phase=d["phase"],
            timestamp=d["timestamp"],
            replaced_prediction=d.get("replaced_prediction"),
            superseded=d.get("superseded", False),
        )


def record_annotation(project, pair_id: str, case: int, annotator: str, phase: int) -> Annotation:
    """Validate and append an annotation through the project store.

    The pair must have been sampled for the given phase; the model
    prediction it replaces is captured for the audit trail.
    """
    validate_case(case)
    return project.record_annotation(pair_id=pair_id, case=case, annotator=annotator, phase=phase)
