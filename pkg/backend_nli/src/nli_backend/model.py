"""Deterministic lexical-overlap NLI model.

Stands in for a pretrained entailment transformer behind the wire
protocol: a small soft-max head over interpretable pair features, shipped
with a hand-initialized prior (identical wording leans entailment,
polarity or numeric mismatch leans contradiction, low overlap leans
neutral) and fine-tunable on posted examples with Adam.
"""

from __future__ import annotations

import logging
import re
import threading
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

LABELS = ("entailment", "contradiction", "neutral")
NEGATIONS = frozenset({"not", "no", "never", "except", "without", "neither", "nor"})

_TOKEN_RE = re.compile(r"[a-z0-9#][a-z0-9#_\-.]*")

FEATURE_NAMES = (
    "bias",
    "jaccard",
    "containment",
    "negation_gap",
    "numeric_jaccard",
    "length_ratio",
    "exact_match",
)

# the "pretrained" prior: rows are entailment / contradiction / neutral
PRIOR_WEIGHTS = np.array(
    [
        [-1.0, 3.0, 1.5, -2.0, 1.0, 0.5, 2.0],
        [-1.0, 2.0, 1.0, 2.5, -1.5, 0.0, -0.5],
        [1.5, -4.0, -1.0, 0.0, 0.0, 0.0, 0.0],
    ]
)


def tokenize(text: str, max_tokens: int | None = None) -> tuple[list[str], bool]:
    """Lowercased tokens plus a flag telling whether truncation happened."""
    tokens = _TOKEN_RE.findall(text.lower())
    if max_tokens is not None and len(tokens) > max_tokens:
        return tokens[:max_tokens], True
    return tokens, False


def pair_features(premise_tokens: list[str], hypothesis_tokens: list[str]) -> np.ndarray:
    p, h = set(premise_tokens), set(hypothesis_tokens)
    union = p | h
    inter = p & h
    jaccard = len(inter) / len(union) if union else 0.0
    containment = len(inter) / min(len(p), len(h)) if p and h else 0.0
    neg_gap = abs(
        sum(t in NEGATIONS for t in premise_tokens) - sum(t in NEGATIONS for t in hypothesis_tokens)
    )
    nums_p = {t for t in p if any(c.isdigit() for c in t)}
    nums_h = {t for t in h if any(c.isdigit() for c in t)}
    num_union = nums_p | nums_h
    numeric_jaccard = len(nums_p & nums_h) / len(num_union) if num_union else 1.0
    length_ratio = (
        min(len(premise_tokens), len(hypothesis_tokens))
        / max(len(premise_tokens), len(hypothesis_tokens))
        if premise_tokens and hypothesis_tokens
        else 0.0
    )
    exact = 1.0 if premise_tokens == hypothesis_tokens else 0.0
    return np.array([1.0, jaccard, containment, float(neg_gap), numeric_jaccard, length_ratio, exact])


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


@dataclass
class NliModel:
    """Soft-max head over pair features with Adam fine-tuning."""

    model_id: str = "ref-backend"
    max_seq_tokens: int = 512
    weights: np.ndarray = field(default_factory=lambda: PRIOR_WEIGHTS.copy())
    version: int = 1

    def __post_init__(self):
        self._lock = threading.Lock()
        self._training = False

    @property
    def training(self) -> bool:
        return self._training

    def _features(self, premise: str, hypothesis: str, request_id: str = "") -> np.ndarray:
        p_tokens, p_trunc = tokenize(premise, self.max_seq_tokens)
        h_tokens, h_trunc = tokenize(hypothesis, self.max_seq_tokens)
        if p_trunc or h_trunc:
            logger.warning(
                "truncated pair %s to %d tokens per side", request_id or "<anon>", self.max_seq_tokens
            )
        return pair_features(p_tokens, h_tokens)

    def predict(self, pairs: list[tuple[str, str, str]]) -> list[dict]:
        """Probabilities for (id, premise, hypothesis) triples; eval is pure."""
        out = []
        for pair_id, premise, hypothesis in pairs:
            probs = softmax(self.weights @ self._features(premise, hypothesis, pair_id))
            out.append(
                {
                    "id": pair_id,
                    "probs": {label: float(probs[i]) for i, label in enumerate(LABELS)},
                }
            )
        return out

    def train(
        self,
        examples: list[tuple[str, str, str]],  # (premise, hypothesis, label)
        learning_rate: float = 2e-5,
        batch_size: int = 32,
        epochs: int = 3,
        seed: int = 0,
        epoch_hook=None,
    ) -> int:
        """Supervised fine-tuning with Adam (eps 1e-8); bumps the version."""
        with self._lock:
            self._training = True
        try:
            X = np.stack(
                [self._features(premise, hypothesis) for premise, hypothesis, _ in examples]
            )
            y = np.array([LABELS.index(label) for _, _, label in examples])
            rng = np.random.default_rng(seed)
            W = self.weights.copy()
            m = np.zeros_like(W)
            v = np.zeros_like(W)
            beta1, beta2, eps = 0.9, 0.999, 1e-8
            step = 0
            for epoch in range(epochs):
                if epoch_hook is not None:
                    epoch_hook(epoch)
                order = rng.permutation(len(examples))
                for start in range(0, len(examples), batch_size):
                    batch = order[start : start + batch_size]
                    probs = softmax(X[batch] @ W.T)
                    grad = probs
                    grad[np.arange(len(batch)), y[batch]] -= 1.0
                    gW = grad.T @ X[batch] / len(batch)
                    step += 1
                    m = beta1 * m + (1 - beta1) * gW
                    v = beta2 * v + (1 - beta2) * gW * gW
                    W -= learning_rate * (m / (1 - beta1**step)) / (
                        np.sqrt(v / (1 - beta2**step)) + eps
                    )
            self.weights = W
            self.version += 1
            return self.version
        finally:
            self._training = False
