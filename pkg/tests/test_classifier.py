import math
import random

import httpx
import numpy as np
import pytest

from speclint.classifier import (
    BackendClient,
    BackendEndpoint,
    LabeledExample,
    Prediction,
    TrainingConfig,
    class_weights,
    feature_dim,
    featurize_pair,
    normalize_probs,
    predict_baseline,
    softmax,
    train_baseline,
    wce_loss,
)
from speclint.errors import BackendUnavailable, EmptyClass, MalformedBackendResponse
from speclint.taxonomy import NLI_LABELS, NLILabel
from speclint.vectorspace import build_vocabulary
from tests.conftest import make_segments

VOCAB = build_vocabulary(
    make_segments(
        [
            "the terminal shall reset the counter and enter state alpha",
            "the terminal shall not reset the counter in state beta",
            "unrelated prose about gamma procedures and #14 codes",
            "more words delta epsilon shall apply #15",
        ]
    )
)


# ----------------------------------------------------------------------
# class_weights
# ----------------------------------------------------------------------
def test_balanced_counts_uniform():
    assert class_weights((50, 50, 50)) == pytest.approx([1 / 3, 1 / 3, 1 / 3], abs=1e-12)


def test_hand_evaluated_weights():
    """counts (90,30,30): w = (5/3, 5, 5) so normalized (1/7, 3/7, 3/7)."""
    w = class_weights((90, 30, 30))
    assert w == pytest.approx([1 / 7, 3 / 7, 3 / 7], abs=1e-12)


def test_weights_always_normalized():
    rng = random.Random(2)
    for _ in range(50):
        counts = [rng.randint(1, 500) for _ in range(3)]
        assert class_weights(counts).sum() == pytest.approx(1.0, abs=1e-9)


def test_empty_class_raises():
    with pytest.raises(EmptyClass):
        class_weights((10, 0, 5))


# ----------------------------------------------------------------------
# wce_loss
# ----------------------------------------------------------------------
def test_perfect_prediction_zero_loss():
    loss, _ = wce_loss([1.0, 0.0, 0.0], 0, [1 / 3, 1 / 3, 1 / 3])
    assert loss == 0.0


def test_hand_evaluated_loss():
    """w_t = 1/3 and p_t = e^-1 gives loss exactly 1/3."""
    loss, _ = wce_loss([math.exp(-1), 0.5, 0.5 - math.exp(-1)], 0, [1 / 3, 1 / 3, 1 / 3])
    assert loss == pytest.approx(1 / 3, abs=1e-12)


def _loss_of_logits(logits, target, weights):
    return wce_loss(softmax(np.asarray(logits)), target, weights)[0]


def test_gradient_matches_central_differences():
    rng = np.random.default_rng(17)
    h = 1e-5
    for _ in range(200):
        logits = rng.normal(size=3)
        target = int(rng.integers(3))
        weights = class_weights(rng.integers(1, 100, size=3))
        _, grad = wce_loss(softmax(logits), target, weights)
        fd = np.zeros(3)
        for i in range(3):
            up, down = logits.copy(), logits.copy()
            up[i] += h
            down[i] -= h
            fd[i] = (_loss_of_logits(up, target, weights) - _loss_of_logits(down, target, weights)) / (2 * h)
        denom = max(np.linalg.norm(fd), 1e-8)
        assert np.linalg.norm(grad - fd) / denom <= 1e-4


def test_affine_gradient_matches_central_differences():
    """Full head: d wce(softmax(Wx+b)) / d(W, b) against finite differences."""
    rng = np.random.default_rng(23)
    h = 1e-5
    for _ in range(100):
        dim = int(rng.integers(2, 9))
        W = rng.normal(size=(3, dim))
        b = rng.normal(size=3)
        x = rng.normal(size=dim)
        target = int(rng.integers(3))
        weights = class_weights(rng.integers(1, 50, size=3))

        probs = softmax(W @ x + b)
        _, grad_logits = wce_loss(probs, target, weights)
        gW = np.outer(grad_logits, x)
        gb = grad_logits

        def loss_at(Wp, bp):
            return wce_loss(softmax(Wp @ x + bp), target, weights)[0]

        fdW = np.zeros_like(W)
        for r in range(3):
            for c in range(dim):
                up, down = W.copy(), W.copy()
                up[r, c] += h
                down[r, c] -= h
                fdW[r, c] = (loss_at(up, b) - loss_at(down, b)) / (2 * h)
        fdb = np.zeros(3)
        for r in range(3):
            up, down = b.copy(), b.copy()
            up[r] += h
            down[r] -= h
            fdb[r] = (loss_at(W, up) - loss_at(W, down)) / (2 * h)

        flat = np.concatenate([gW.ravel(), gb])
        flat_fd = np.concatenate([fdW.ravel(), fdb])
        assert np.linalg.norm(flat - flat_fd) / max(np.linalg.norm(flat_fd), 1e-8) <= 1e-4


def test_single_full_batch_gd_step_does_not_increase_loss():
    rng = np.random.default_rng(5)
    dim = 6
    X = rng.normal(size=(24, dim))
    y = rng.integers(3, size=24)
    weights = class_weights(np.bincount(y, minlength=3) + 1)
    W = rng.normal(size=(3, dim)) * 0.1
    b = np.zeros(3)

    def batch_loss(Wp, bp):
        total = 0.0
        for xi, yi in zip(X, y):
            total += wce_loss(softmax(Wp @ xi + bp), int(yi), weights)[0]
        return total / len(X)

    gW = np.zeros_like(W)
    gb = np.zeros_like(b)
    for xi, yi in zip(X, y):
        _, g = wce_loss(softmax(W @ xi + b), int(yi), weights)
        gW += np.outer(g, xi) / len(X)
        gb += g / len(X)
    assert batch_loss(W - 1e-3 * gW, b - 1e-3 * gb) <= batch_loss(W, b)


def test_weighting_effect_raises_misclassified_loss():
    probs = [0.7, 0.2, 0.1]  # misclassified contradiction (target index 1)
    low, _ = wce_loss(probs, 1, [0.4, 0.2, 0.4])
    high, _ = wce_loss(probs, 1, [0.3, 0.4, 0.3])
    assert high > low


# ----------------------------------------------------------------------
# featurize_pair
# ----------------------------------------------------------------------
def test_identical_pair_features():
    text = "the terminal shall reset the counter and enter state alpha"
    features = featurize_pair(text, text, VOCAB, n_buckets=32).vector
    assert features[:32] == pytest.approx(np.zeros(32))  # difference buckets
    assert features[64] == 1.0  # cosine
    assert features[65] == 1.0  # length ratio
    assert features[66] == 0.0  # negation difference
    assert features[67] == 1.0  # numeric overlap (vacuous)


def test_disjoint_pair_features():
    features = featurize_pair(
        "alpha beta gamma", "unseen tokens entirely", VOCAB, n_buckets=16
    ).vector
    assert features[16:32] == pytest.approx(np.zeros(16))  # product buckets
    assert features[32] == 0.0  # cosine


def test_negation_and_numeric_features():
    features = featurize_pair(
        "the terminal shall reset the counter #14",
        "the terminal shall not reset the counter #15",
        VOCAB,
        n_buckets=8,
    ).vector
    assert features[2 * 8 + 2] == 1.0  # one extra negation cue
    assert features[2 * 8 + 3] == 0.0  # disjoint numeric tokens


def test_featurize_deterministic():
    premise = "the terminal shall reset the counter and enter state alpha"
    hypothesis = "the terminal shall not reset the counter in state beta"
    first = featurize_pair(premise, hypothesis, VOCAB).vector
    second = featurize_pair(premise, hypothesis, VOCAB).vector
    rebuilt_vocab = build_vocabulary(
        make_segments(
            [
                "the terminal shall reset the counter and enter state alpha",
                "the terminal shall not reset the counter in state beta",
                "unrelated prose about gamma procedures and #14 codes",
                "more words delta epsilon shall apply #15",
            ]
        )
    )
    third = featurize_pair(premise, hypothesis, rebuilt_vocab).vector
    assert first.tobytes() == second.tobytes() == third.tobytes()
    assert first.shape == (feature_dim(),)


# ----------------------------------------------------------------------
# train_baseline / predict
# ----------------------------------------------------------------------
def separable_examples():
    examples = []
    for i in range(10):
        examples.append(
            LabeledExample(
                f"e{i}",
                f"the terminal shall reset the counter and enter state alpha w{i}",
                f"the terminal must reset the counter and move to state alpha w{i}",
                NLILabel.ENTAILMENT,
            )
        )
        examples.append(
            LabeledExample(
                f"c{i}",
                f"the terminal shall reset the counter and enter state alpha v{i}",
                f"the terminal shall not reset the counter in state beta v{i}",
                NLILabel.CONTRADICTION,
            )
        )
        examples.append(
            LabeledExample(
                f"n{i}",
                f"unrelated prose about gamma procedures and #14 codes u{i}",
                f"more words delta epsilon shall apply #15 t{i}",
                NLILabel.NEUTRAL,
            )
        )
    return examples


def training_vocab(examples):
    texts = [e.premise for e in examples] + [e.hypothesis for e in examples]
    return build_vocabulary(make_segments(texts))


def test_separable_set_reaches_full_training_accuracy():
    examples = separable_examples()
    vocab = training_vocab(examples)
    config = TrainingConfig(seed=3, epochs=200, feature_buckets=64, dropout_rate=0.0)
    model = train_baseline(examples, vocab, config)
    correct = 0
    for example in examples:
        prediction = predict_baseline(model, example.premise, example.hypothesis, vocab)
        correct += prediction.label is example.label
    assert correct == len(examples)


def test_zero_epochs_uniform_probabilities():
    examples = separable_examples()
    vocab = training_vocab(examples)
    model = train_baseline(examples, vocab, TrainingConfig(seed=1, epochs=0))
    prediction = predict_baseline(model, "any text shall", "other text shall", vocab)
    assert list(prediction.probs.values()) == pytest.approx([1 / 3] * 3, abs=1e-12)


def test_training_is_deterministic_per_seed():
    examples = separable_examples()
    vocab = training_vocab(examples)
    config = TrainingConfig(seed=9, epochs=40, feature_buckets=64)
    a = train_baseline(examples, vocab, config)
    b = train_baseline(examples, vocab, config)
    assert np.array_equal(a.weights, b.weights)
    assert np.array_equal(a.bias, b.bias)
    c = train_baseline(examples, vocab, TrainingConfig(seed=10, epochs=40, feature_buckets=64))
    assert not np.array_equal(a.weights, c.weights)


def test_dropout_never_applies_at_inference():
    examples = separable_examples()
    vocab = training_vocab(examples)
    model = train_baseline(
        examples, vocab, TrainingConfig(seed=4, epochs=30, feature_buckets=64, dropout_rate=0.4)
    )
    first = predict_baseline(model, "alpha shall beta", "alpha shall gamma", vocab)
    for _ in range(5):
        again = predict_baseline(model, "alpha shall beta", "alpha shall gamma", vocab)
        assert again.probs == first.probs
    assert sum(first.probs.values()) == pytest.approx(1.0, abs=1e-6)

    # changing the configured rate on a trained model cannot move predictions
    import dataclasses

    from speclint.classifier import BaselineModel

    retagged = BaselineModel(
        weights=model.weights,
        bias=model.bias,
        class_w=model.class_w,
        config=dataclasses.replace(model.config, dropout_rate=0.9),
    )
    assert predict_baseline(retagged, "alpha shall beta", "alpha shall gamma", vocab).probs == first.probs


def test_prediction_probabilities_always_distribution():
    examples = separable_examples()
    vocab = training_vocab(examples)
    model = train_baseline(examples, vocab, TrainingConfig(seed=6, epochs=60, feature_buckets=64))
    rng = random.Random(0)
    words = ["alpha", "beta", "gamma", "terminal", "shall", "not", "#14", "state"]
    for _ in range(50):
        premise = " ".join(rng.choices(words, k=rng.randint(2, 12)))
        hypothesis = " ".join(rng.choices(words, k=rng.randint(2, 12)))
        prediction = predict_baseline(model, premise, hypothesis, vocab)
        values = np.array(list(prediction.probs.values()))
        assert values.min() >= 0.0
        assert values.sum() == pytest.approx(1.0, abs=1e-6)


# ----------------------------------------------------------------------
# backend protocol client
# ----------------------------------------------------------------------
def make_client(handler, retries=0):
    endpoint = BackendEndpoint(base_url="http://backend", model_id="m", retries=retries, backoff=0.0)
    transport = httpx.MockTransport(handler)
    return BackendClient(endpoint, client=httpx.Client(transport=transport, base_url="http://backend"))


def test_backend_probs_renormalized_within_tolerance():
    probs = normalize_probs({"entailment": 0.5005, "contradiction": 0.3, "neutral": 0.2})
    assert sum(probs.values()) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(MalformedBackendResponse):
        normalize_probs({"entailment": 0.7, "contradiction": 0.4, "neutral": 0.2})
    with pytest.raises(MalformedBackendResponse):
        normalize_probs({"entailment": 0.7, "contradiction": 0.3})


def test_backend_predict_round_trip():
    def handler(request):
        if request.url.path == "/v1/health":
            return httpx.Response(200, json={"status": "ok", "model_id": "m"})
        body = {
            "predictions": [
                {"id": "p1", "probs": {"entailment": 0.2, "contradiction": 0.7, "neutral": 0.1}}
            ]
        }
        return httpx.Response(200, json=body)

    client = make_client(handler)
    assert client.health()["model_id"] == "m"
    predictions = client.predict_batch([("p1", "a shall b", "a shall not b")])
    assert predictions[0].label is NLILabel.CONTRADICTION
    assert predictions[0].model_id == "m"


def test_backend_unavailable_after_retries():
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        return httpx.Response(503)

    client = make_client(handler, retries=2)
    with pytest.raises(BackendUnavailable):
        client.health()
    assert calls["n"] == 3


def test_backend_malformed_response():
    def handler(request):
        return httpx.Response(200, json={"nonsense": True})

    client = make_client(handler)
    with pytest.raises(MalformedBackendResponse):
        client.predict_batch([("p1", "a", "b")])


def test_backend_train_returns_version():
    def handler(request):
        import json

        body = json.loads(request.content)
        assert body["config"]["learning_rate"] == 2e-5
        assert body["config"]["batch_size"] == 32
        return httpx.Response(200, json={"model_version": "7"})

    client = make_client(handler)
    version = client.train(
        [LabeledExample("p", "a shall b", "a shall c", NLILabel.ENTAILMENT)], {"epochs": 2}
    )
    assert version == "7"


def test_prediction_argmax_tie_prefers_contradiction():
    prediction = Prediction(
        pair_id="p",
        probs={
            NLILabel.ENTAILMENT: 1 / 3,
            NLILabel.CONTRADICTION: 1 / 3,
            NLILabel.NEUTRAL: 1 / 3,
        },
        model_id="m",
    )
    assert prediction.label is NLILabel.CONTRADICTION
    assert [l for l in NLI_LABELS] == [NLILabel.ENTAILMENT, NLILabel.CONTRADICTION, NLILabel.NEUTRAL]
