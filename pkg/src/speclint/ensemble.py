"""Majority voting over classifier members and result selection.

The final label is the plurality of per-member argmax votes. When no
unique plurality exists the tie breaks toward the label with the highest
probability summed across members, then (on exact sum ties) toward
contradiction > entailment > neutral: missing a real inconsistency costs
more than reviewing a spurious one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classifier import Prediction
from .errors import EmptyPredictionSet, MixedPairIds
from .taxonomy import NLI_LABELS, NLILabel

TIE_ORDER = (NLILabel.CONTRADICTION, NLILabel.ENTAILMENT, NLILabel.NEUTRAL)
SUM_TIE_EPS = 1e-12


@dataclass
class EnsembleDecision:
    pair_id: str
    votes: dict[str, NLILabel]  # model_id -> argmax label
    final: NLILabel
    confidence: float
    tie_broken: bool
    mean_probs: dict[NLILabel, float]

    def to_dict(self) -> dict:
        return {
            "pair_id": self.pair_id,
            "votes": {model: label.value for model, label in self.votes.items()},
            "final": self.final.value,
            "confidence": self.confidence,
            "tie_broken": self.tie_broken,
            "mean_probs": {label.value: p for label, p in self.mean_probs.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleDecision":
        return cls(
            pair_id=d["pair_id"],
            votes={model: NLILabel(label) for model, label in d["votes"].items()},
            final=NLILabel(d["final"]),
            confidence=d["confidence"],
            tie_broken=d["tie_broken"],
            mean_probs={NLILabel(k): v for k, v in d["mean_probs"].items()},
        )

    def entropy(self) -> float:
        p = np.array([max(self.mean_probs[label], 1e-12) for label in NLI_LABELS])
        return float(-(p * np.log(p)).sum())


def majority_vote(predictions: list[Prediction]) -> EnsembleDecision:
    """Combine k predictions for one pair into a single decision.

    confidence = (agreeing votes / k) * mean probability the agreeing
    members assign to the final label.
    """
    if not predictions:
        raise EmptyPredictionSet("majority_vote needs at least one prediction")
    pair_ids = {p.pair_id for p in predictions}
    if len(pair_ids) != 1:
        raise MixedPairIds(f"predictions span multiple pairs: {sorted(pair_ids)}")

    votes = {p.model_id: p.label for p in predictions}
    tallies: dict[NLILabel, int] = {}
    for p in predictions:
        tallies[p.label] = tallies.get(p.label, 0) + 1
    top = max(tallies.values())
    leaders = [label for label in TIE_ORDER if tallies.get(label, 0) == top]

    tie_broken = len(leaders) > 1
    if not tie_broken:
        final = leaders[0]
    else:
        summed = {
            label: sum(p.probs[label] for p in predictions) for label in leaders
        }
        best = max(summed.values())
        final = next(label for label in TIE_ORDER if summed.get(label, -1.0) >= best - SUM_TIE_EPS)

    agreeing = [p for p in predictions if p.label is final]
    k = len(predictions)
    mean_final_prob = sum(p.probs[final] for p in agreeing) / len(agreeing)
    confidence = (len(agreeing) / k) * mean_final_prob

    mean_probs = {
        label: sum(p.probs[label] for p in predictions) / k for label in NLI_LABELS
    }
    return EnsembleDecision(
        pair_id=predictions[0].pair_id,
        votes=votes,
        final=final,
        confidence=confidence,
        tie_broken=tie_broken,
        mean_probs=mean_probs,
    )


def select_high_confidence(
    decisions: list[EnsembleDecision], tau: float
) -> list[EnsembleDecision]:
    """Contradiction-final decisions at confidence >= tau, i.e. the results."""
    if not (0.0 <= tau <= 1.0):
        raise ValueError(f"tau must be in [0, 1], got {tau}")
    return [d for d in decisions if d.final is NLILabel.CONTRADICTION and d.confidence >= tau]
