"""TF-IDF vector space over segments and cosine similarity.

Each segment is one document. Weights are tf * idf with
tf(t, d) = count(t, d) / len(d) and idf(t) = ln(n_documents / df(t)),
no smoothing: a term present in every document weighs exactly zero.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Iterator

from .corpus import Segment
from .errors import EmptyCorpus

# keep cause codes ("#14"), hyphenated and underscored protocol names intact
_TOKEN_SPLIT_RE = re.compile(r"[^0-9a-z#_\-]+")


def tokenize(text: str) -> list[str]:
    """Lowercase terms split on anything outside [a-z0-9#_-].

    Terms shorter than 2 characters are dropped unless they start with '#'.
    """
    parts = _TOKEN_SPLIT_RE.split(text.lower())
    return [t for t in parts if len(t) >= 2 or t.startswith("#")]


@dataclass(frozen=True)
class TermStats:
    index: int
    document_frequency: int
    idf: float


@dataclass
class Vocabulary:
    terms: dict[str, TermStats]
    n_documents: int

    def idf(self, term: str) -> float:
        stats = self.terms.get(term)
        return stats.idf if stats is not None else 0.0

    def index(self, term: str) -> int | None:
        stats = self.terms.get(term)
        return stats.index if stats is not None else None

    def __len__(self) -> int:
        return len(self.terms)


@dataclass
class SegmentVector:
    segment_id: str
    weights: dict[int, float]  # term_index -> tfidf weight, zeros omitted
    l2_norm: float

    def to_dict(self) -> dict:
        return {
            "segment_id": self.segment_id,
            "weights": [[i, w] for i, w in sorted(self.weights.items())],
            "l2_norm": self.l2_norm,
        }


def build_vocabulary(segments: Iterable[Segment]) -> Vocabulary:
    """Document frequencies and idf over one shared segment collection.

    Term indices are assigned in sorted term order so the mapping is
    deterministic for a given corpus.
    """
    doc_freq: dict[str, int] = {}
    n_documents = 0
    for segment in segments:
        n_documents += 1
        for term in set(tokenize(segment.text)):
            doc_freq[term] = doc_freq.get(term, 0) + 1
    if n_documents == 0:
        raise EmptyCorpus("cannot build a vocabulary from zero segments")

    terms = {}
    for index, term in enumerate(sorted(doc_freq)):
        df = doc_freq[term]
        terms[term] = TermStats(index=index, document_frequency=df, idf=math.log(n_documents / df))
    return Vocabulary(terms=terms, n_documents=n_documents)


def tfidf_weights(text: str, vocab: Vocabulary) -> dict[int, float]:
    """Sparse tf-idf weights for arbitrary text under a fixed vocabulary.

    Out-of-vocabulary terms contribute nothing (but still count toward the
    tf denominator). All-ubiquitous text yields the empty map.
    """
    tokens = tokenize(text)
    weights: dict[int, float] = {}
    if tokens:
        counts: dict[str, int] = {}
        for token in tokens:
            counts[token] = counts.get(token, 0) + 1
        total = len(tokens)
        for term, count in counts.items():
            stats = vocab.terms.get(term)
            if stats is None or stats.idf == 0.0:
                continue
            weights[stats.index] = (count / total) * stats.idf
    return weights


def weights_norm(weights: dict[int, float]) -> float:
    return math.sqrt(sum(w * w for w in weights.values()))


def vectorize(segment: Segment, vocab: Vocabulary) -> SegmentVector:
    """tf-idf vector for one segment; zero vector when every term is ubiquitous."""
    weights = tfidf_weights(segment.text, vocab)
    return SegmentVector(
        segment_id=segment.segment_id, weights=weights, l2_norm=weights_norm(weights)
    )


def cosine(a: SegmentVector, b: SegmentVector) -> float:
    """Cosine similarity, defined as 0 when either vector is zero.

    Weights are nonnegative, so the result lives in [0, 1]; it is clamped
    to guard float round-off at the top end.
    """
    if a.l2_norm == 0.0 or b.l2_norm == 0.0:
        return 0.0
    if a.weights == b.weights:
        return 1.0  # exact, so duplicate wording reliably hits psi = 1
    small, large = (a.weights, b.weights) if len(a.weights) <= len(b.weights) else (b.weights, a.weights)
    # fixed accumulation order keeps cosine(a, b) == cosine(b, a) bit-exact
    common = sorted(index for index in small if index in large)
    dot = 0.0
    for index in common:
        dot += small[index] * large[index]
    return min(max(dot / (a.l2_norm * b.l2_norm), 0.0), 1.0)


def similarity_matrix(vectors: list[SegmentVector]) -> Iterator[tuple[int, int, float]]:
    """Stream the lower triangle of the pairwise cosine matrix.

    Yields (i, j, psi) for j < i in row-major order: exactly
    n(n-1)/2 entries, never materializing the matrix.
    """
    for i in range(1, len(vectors)):
        vi = vectors[i]
        for j in range(i):
            yield i, j, cosine(vi, vectors[j])
