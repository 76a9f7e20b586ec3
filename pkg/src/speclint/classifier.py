"""Three-way entailment classifiers.

Two interchangeable member kinds sit behind one contract: a native
baseline (hashed tf-idf pair features into a multinomial soft-max layer,
trained with class-weighted cross-entropy and Adam) and an HTTP client for
external model backends speaking the wire protocol:

    GET  /v1/health   -> {status: "ok", model_id}
    POST /v1/predict  {pairs: [{id, premise, hypothesis}]}
                      -> {predictions: [{id, probs: {entailment, contradiction, neutral}}]}
    POST /v1/train    {examples: [...], config: {...}} -> {model_version}
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import httpx
import numpy as np

from .errors import (
    BackendUnavailable,
    EmptyClass,
    MalformedBackendResponse,
    NonFiniteLoss,
)
from .taxonomy import NLI_LABELS, NLILabel
from .vectorspace import Vocabulary, tfidf_weights, tokenize, weights_norm

LABEL_INDEX = {label: i for i, label in enumerate(NLI_LABELS)}
# deterministic argmax tie-break, recall-favoring for the rare class
TIE_PREFERENCE = (NLILabel.CONTRADICTION, NLILabel.ENTAILMENT, NLILabel.NEUTRAL)

NEGATION_CUES = ("not", "no", "except", "without", "shall-not")
PROB_FLOOR = 1e-12
DEFAULT_FEATURE_BUCKETS = 512

EXAMPLE_ORIGINS = ("human", "synthetic_eda", "seed")


@dataclass(frozen=True)
class LabeledExample:
    pair_id: str
    premise: str
    hypothesis: str
    label: NLILabel
    origin: str = "human"

    def __post_init__(self):
        if not self.premise or not self.hypothesis:
            raise ValueError("premise and hypothesis must be nonempty")
        if self.origin not in EXAMPLE_ORIGINS:
            raise ValueError(f"unknown example origin {self.origin!r}")

    def to_dict(self) -> dict:
        return {
            "pair_id": self.pair_id,
            "premise": self.premise,
            "hypothesis": self.hypothesis,
            "label": self.label.value,
            "origin": self.origin,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LabeledExample":
        return cls(
            pair_id=d["pair_id"],
            premise=d["premise"],
            hypothesis=d["hypothesis"],
            label=NLILabel(d["label"]),
            origin=d.get("origin", "human"),
        )


@dataclass
class PairFeatures:
    """Dense feature vector of dimension 2 * buckets + 4."""

    vector: np.ndarray


def feature_dim(n_buckets: int = DEFAULT_FEATURE_BUCKETS) -> int:
    return 2 * n_buckets + 4


def featurize_pair(
    premise: str,
    hypothesis: str,
    vocab: Vocabulary,
    n_buckets: int = DEFAULT_FEATURE_BUCKETS,
) -> PairFeatures:
    """Deterministic pair features standing in for a learned encoder.

    Layout: [|v_p - v_h| folded into n_buckets, v_p * v_h folded into
    n_buckets, cosine, length ratio, negation-cue count difference,
    numeric-token overlap].
    """
    wp = tfidf_weights(premise, vocab)
    wh = tfidf_weights(hypothesis, vocab)

    vector = np.zeros(feature_dim(n_buckets))
    for index in sorted(set(wp) | set(wh)):
        vector[index % n_buckets] += abs(wp.get(index, 0.0) - wh.get(index, 0.0))
    for index in sorted(set(wp) & set(wh)):
        vector[n_buckets + index % n_buckets] += wp[index] * wh[index]

    norm_p, norm_h = weights_norm(wp), weights_norm(wh)
    if norm_p > 0.0 and norm_h > 0.0:
        if wp == wh:
            vector[2 * n_buckets] = 1.0
        else:
            dot = sum(w * wh[i] for i, w in wp.items() if i in wh)
            vector[2 * n_buckets] = min(max(dot / (norm_p * norm_h), 0.0), 1.0)

    tokens_p, tokens_h = tokenize(premise), tokenize(hypothesis)
    if tokens_p and tokens_h:
        vector[2 * n_buckets + 1] = min(len(tokens_p), len(tokens_h)) / max(
            len(tokens_p), len(tokens_h)
        )
    neg_p = sum(1 for t in tokens_p if t in NEGATION_CUES)
    neg_h = sum(1 for t in tokens_h if t in NEGATION_CUES)
    vector[2 * n_buckets + 2] = abs(neg_p - neg_h)

    nums_p = {t for t in tokens_p if any(c.isdigit() for c in t)}
    nums_h = {t for t in tokens_h if any(c.isdigit() for c in t)}
    union = nums_p | nums_h
    # vacuously 1.0: no numeric tokens means no numeric disagreement
    vector[2 * n_buckets + 3] = len(nums_p & nums_h) / len(union) if union else 1.0

    return PairFeatures(vector=vector)


def class_weights(counts) -> np.ndarray:
    """Inverse-frequency class weights, normalized to sum 1.

    w_i = N / n_i, then normalized; rarer classes weigh more.
    """
    counts = np.asarray(counts, dtype=float)
    if counts.shape != (3,):
        raise ValueError("expected one count per NLI class")
    if np.any(counts < 1):
        raise EmptyClass(f"every class needs at least one example, got counts {counts.tolist()}")
    w = counts.sum() / counts
    return w / w.sum()


def wce_loss(probs, target_index: int, class_w) -> tuple[float, np.ndarray]:
    """Class-weighted negative log-likelihood and its gradient w.r.t. logits.

    loss = -w_t * ln(p_t) with p_t floored at 1e-12;
    d loss / d logits = w_t * (p - onehot(t)).
    """
    probs = np.asarray(probs, dtype=float)
    class_w = np.asarray(class_w, dtype=float)
    wt = class_w[target_index]
    loss = -wt * math.log(max(probs[target_index], PROB_FLOOR))
    grad = wt * probs.copy()
    grad[target_index] -= wt
    return loss, grad


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


@dataclass
class TrainingConfig:
    seed: int
    learning_rate: float = 0.05
    batch_size: int = 32
    epochs: int = 300
    dropout_rate: float = 0.1
    loss_reduction: str = "mean"  # or "sum"
    feature_buckets: int = DEFAULT_FEATURE_BUCKETS

    def __post_init__(self):
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.loss_reduction not in ("mean", "sum"):
            raise ValueError("loss_reduction must be 'mean' or 'sum'")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "dropout_rate": self.dropout_rate,
            "loss_reduction": self.loss_reduction,
            "feature_buckets": self.feature_buckets,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        return cls(**d)


@dataclass
class BaselineModel:
    weights: np.ndarray  # [3, F]
    bias: np.ndarray  # [3]
    class_w: np.ndarray  # [3], sums to 1
    config: TrainingConfig

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[1]

    def logits(self, features: np.ndarray) -> np.ndarray:
        return features @ self.weights.T + self.bias

    def to_dict(self) -> dict:
        return {
            "W": self.weights.tolist(),
            "b": self.bias.tolist(),
            "class_weights": self.class_w.tolist(),
            "config": self.config.to_dict(),
            "feature_dim": self.feature_dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BaselineModel":
        return cls(
            weights=np.asarray(d["W"], dtype=float),
            bias=np.asarray(d["b"], dtype=float),
            class_w=np.asarray(d["class_weights"], dtype=float),
            config=TrainingConfig.from_dict(d["config"]),
        )


def train_baseline(
    examples: list[LabeledExample],
    vocab: Vocabulary,
    config: TrainingConfig,
    initial: BaselineModel | None = None,
    features: dict[str, np.ndarray] | None = None,
) -> BaselineModel:
    """Mini-batch Adam over the weighted cross-entropy, deterministic per seed.

    Zero-initialized unless continuing from `initial`. Inverted dropout is
    applied to features during training only. `features` may carry
    precomputed vectors keyed by pair_id.
    """
    if not examples:
        raise EmptyClass("no training examples")
    dim = feature_dim(config.feature_buckets)
    X = np.empty((len(examples), dim))
    y = np.empty(len(examples), dtype=int)
    for row, example in enumerate(examples):
        cached = features.get(example.pair_id) if features else None
        X[row] = (
            cached
            if cached is not None
            else featurize_pair(
                example.premise, example.hypothesis, vocab, config.feature_buckets
            ).vector
        )
        y[row] = LABEL_INDEX[example.label]

    counts = np.bincount(y, minlength=3)
    class_w = class_weights(counts)

    if initial is not None:
        if initial.feature_dim != dim:
            raise ValueError("feature dimension mismatch with initial model")
        W, b = initial.weights.copy(), initial.bias.copy()
    else:
        W, b = np.zeros((3, dim)), np.zeros(3)

    rng = np.random.default_rng(config.seed)
    # Adam state
    mW = np.zeros_like(W)
    vW = np.zeros_like(W)
    mb = np.zeros_like(b)
    vb = np.zeros_like(b)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    keep = 1.0 - config.dropout_rate

    for _ in range(config.epochs):
        order = rng.permutation(len(examples))
        for start in range(0, len(examples), config.batch_size):
            batch = order[start : start + config.batch_size]
            Xb = X[batch]
            if config.dropout_rate > 0.0:
                mask = (rng.random(Xb.shape) < keep) / keep
                Xb = Xb * mask
            yb = y[batch]
            probs = softmax(Xb @ W.T + b)

            wt = class_w[yb][:, None]
            grad_logits = wt * probs
            grad_logits[np.arange(len(batch)), yb] -= wt[:, 0]
            sample_losses = -wt[:, 0] * np.log(
                np.maximum(probs[np.arange(len(batch)), yb], PROB_FLOOR)
            )
            if config.loss_reduction == "mean":
                grad_logits /= len(batch)
                loss = sample_losses.mean()
            else:
                loss = sample_losses.sum()
            if not math.isfinite(loss):
                raise NonFiniteLoss(f"loss diverged at adam step {step}: {loss}")

            gW = grad_logits.T @ Xb
            gb = grad_logits.sum(axis=0)

            step += 1
            mW = beta1 * mW + (1 - beta1) * gW
            vW = beta2 * vW + (1 - beta2) * gW * gW
            mb = beta1 * mb + (1 - beta1) * gb
            vb = beta2 * vb + (1 - beta2) * gb * gb
            corr1 = 1 - beta1**step
            corr2 = 1 - beta2**step
            W -= config.learning_rate * (mW / corr1) / (np.sqrt(vW / corr2) + eps)
            b -= config.learning_rate * (mb / corr1) / (np.sqrt(vb / corr2) + eps)

    return BaselineModel(weights=W, bias=b, class_w=class_w, config=config)


@dataclass
class Prediction:
    pair_id: str
    probs: dict[NLILabel, float]
    model_id: str
    phase: int = 0

    @property
    def label(self) -> NLILabel:
        best = max(self.probs.values())
        for candidate in TIE_PREFERENCE:
            if self.probs[candidate] == best:
                return candidate
        raise AssertionError("unreachable")

    def prob_vector(self) -> np.ndarray:
        return np.array([self.probs[label] for label in NLI_LABELS])

    def to_dict(self) -> dict:
        return {
            "pair_id": self.pair_id,
            "probs": {label.value: p for label, p in self.probs.items()},
            "model_id": self.model_id,
            "phase": self.phase,
        }


def predict_baseline(
    model: BaselineModel,
    premise: str,
    hypothesis: str,
    vocab: Vocabulary,
    pair_id: str = "",
    model_id: str = "baseline",
    phase: int = 0,
    feature_vector: np.ndarray | None = None,
) -> Prediction:
    """Soft-max over the affine head; dropout never applies at inference."""
    if feature_vector is None:
        feature_vector = featurize_pair(
            premise, hypothesis, vocab, model.config.feature_buckets
        ).vector
    probs = softmax(model.logits(feature_vector))
    return Prediction(
        pair_id=pair_id,
        probs={label: float(probs[i]) for i, label in enumerate(NLI_LABELS)},
        model_id=model_id,
        phase=phase,
    )


@dataclass(frozen=True)
class BackendEndpoint:
    base_url: str
    model_id: str
    timeout: float = 30.0
    retries: int = 2
    backoff: float = 0.25

    def to_dict(self) -> dict:
        return {
            "base_url": self.base_url,
            "model_id": self.model_id,
            "timeout": self.timeout,
            "retries": self.retries,
            "backoff": self.backoff,
        }


class BackendClient:
    """HTTP client for one external classifier backend."""

    def __init__(self, endpoint: BackendEndpoint, client: httpx.Client | None = None):
        self.endpoint = endpoint
        self._client = client or httpx.Client(
            base_url=endpoint.base_url, timeout=endpoint.timeout
        )

    def _request(self, method: str, path: str, **kwargs) -> httpx.Response:
        last_error: Exception | None = None
        for attempt in range(self.endpoint.retries + 1):
            try:
                response = self._client.request(method, path, **kwargs)
                if response.status_code >= 500:
                    raise BackendUnavailable(
                        f"{self.endpoint.base_url}{path} returned {response.status_code}"
                    )
                return response
            except (httpx.TransportError, BackendUnavailable) as error:
                last_error = error
                if attempt < self.endpoint.retries:
                    time.sleep(self.endpoint.backoff * (attempt + 1))
        raise BackendUnavailable(f"backend {self.endpoint.base_url} unreachable: {last_error}")

    def health(self) -> dict:
        response = self._request("GET", "/v1/health")
        body = response.json()
        if body.get("status") != "ok":
            raise BackendUnavailable(f"backend unhealthy: {body}")
        return body

    def predict_batch(
        self, pairs: list[tuple[str, str, str]], phase: int = 0, batch_size: int = 32
    ) -> list[Prediction]:
        predictions: list[Prediction] = []
        for start in range(0, len(pairs), batch_size):
            chunk = pairs[start : start + batch_size]
            payload = {
                "pairs": [
                    {"id": pid, "premise": premise, "hypothesis": hypothesis}
                    for pid, premise, hypothesis in chunk
                ]
            }
            response = self._request("POST", "/v1/predict", json=payload)
            predictions.extend(self._parse_predictions(response, chunk, phase))
        return predictions

    def _parse_predictions(
        self, response: httpx.Response, chunk: list[tuple[str, str, str]], phase: int
    ) -> list[Prediction]:
        try:
            rows = {row["id"]: row["probs"] for row in response.json()["predictions"]}
        except (KeyError, TypeError, ValueError) as error:
            raise MalformedBackendResponse(f"bad predict body: {error}") from error
        out = []
        for pid, _, _ in chunk:
            if pid not in rows:
                raise MalformedBackendResponse(f"prediction missing for pair {pid}")
            out.append(
                Prediction(
                    pair_id=pid,
                    probs=normalize_probs(rows[pid]),
                    model_id=self.endpoint.model_id,
                    phase=phase,
                )
            )
        return out

    def train(self, examples: list[LabeledExample], config: dict | None = None) -> str:
        # defaults match transformer fine-tuning practice for this protocol
        body_config = {"learning_rate": 2e-5, "batch_size": 32, "epochs": 3, "seed": 0}
        body_config.update(config or {})
        payload = {
            "examples": [
                {"premise": e.premise, "hypothesis": e.hypothesis, "label": e.label.value}
                for e in examples
            ],
            "config": body_config,
        }
        response = self._request("POST", "/v1/train", json=payload)
        try:
            return str(response.json()["model_version"])
        except (KeyError, TypeError, ValueError) as error:
            raise MalformedBackendResponse(f"bad train body: {error}") from error


def normalize_probs(raw: dict) -> dict[NLILabel, float]:
    """Validate a backend probability map; renormalize tiny drift only."""
    try:
        probs = {label: float(raw[label.value]) for label in NLI_LABELS}
    except (KeyError, TypeError, ValueError) as error:
        raise MalformedBackendResponse(f"bad probability map: {raw!r}") from error
    if any(p < 0.0 or p > 1.0 + 1e-3 for p in probs.values()):
        raise MalformedBackendResponse(f"probabilities out of range: {raw!r}")
    total = sum(probs.values())
    if abs(total - 1.0) > 1e-3:
        raise MalformedBackendResponse(f"probabilities sum to {total}, beyond tolerance")
    return {label: p / total for label, p in probs.items()}
