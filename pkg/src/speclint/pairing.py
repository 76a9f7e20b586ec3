"""Pair-space generation and filtration.

Builds the scoped pair space over one or more corpora (intra-corpus lower
triangle, cross-corpus full product), scores every pair with cosine
similarity under a single shared vocabulary, and keeps only the band
psi_min <= psi <= psi_max, followed by a boilerplate suppression pass.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

from .corpus import Segment, split_sentences
from .errors import BadThresholds, UnknownCorpus
from .vectorspace import SegmentVector, Vocabulary, build_vocabulary, cosine, vectorize

STATUS_CANDIDATE = "candidate"
STATUS_FILTERED_OUT = "filtered_out"
STATUS_PENDING = "pending_annotation"
STATUS_ANNOTATED = "annotated"
STATUS_PREDICTED = "predicted"
STATUS_TRIAGED_CONFIRMED = "triaged_confirmed"
STATUS_TRIAGED_CONTEXT_FP = "triaged_context_fp"

PAIR_STATUSES = (
    STATUS_CANDIDATE,
    STATUS_FILTERED_OUT,
    STATUS_PENDING,
    STATUS_ANNOTATED,
    STATUS_PREDICTED,
    STATUS_TRIAGED_CONFIRMED,
    STATUS_TRIAGED_CONTEXT_FP,
)


def pair_id_for(segment_a: str, segment_b: str) -> str:
    a, b = sorted((segment_a, segment_b))
    return f"{a}|{b}"


@dataclass
class PoS:
    """A pair of segments: the unit of analysis.

    segment_a/segment_b are stored in canonical (lexicographic) order, so
    each unordered pair exists exactly once per project.
    """

    pair_id: str
    segment_a: str
    segment_b: str
    psi: float
    status: str = STATUS_CANDIDATE

    @classmethod
    def make(cls, segment_a: str, segment_b: str, psi: float, status: str = STATUS_CANDIDATE) -> "PoS":
        a, b = sorted((segment_a, segment_b))
        return cls(pair_id=f"{a}|{b}", segment_a=a, segment_b=b, psi=psi, status=status)

    def to_dict(self) -> dict:
        return {
            "pair_id": self.pair_id,
            "segment_a": self.segment_a,
            "segment_b": self.segment_b,
            "psi": self.psi,
            "status": self.status,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PoS":
        return cls(
            pair_id=d["pair_id"],
            segment_a=d["segment_a"],
            segment_b=d["segment_b"],
            psi=d["psi"],
            status=d["status"],
        )


@dataclass(frozen=True)
class PairScope:
    """Which corpora get paired with which.

    A self-union (A, A) means intra-corpus lower-triangular pairing; a
    cross union (A, B) means the full A x B product.
    """

    name: str
    corpus_pairs: tuple[tuple[str, str], ...]

    def __post_init__(self):
        normalized = []
        seen = set()
        for a, b in self.corpus_pairs:
            key = tuple(sorted((a, b)))
            if key not in seen:
                seen.add(key)
                normalized.append(key)
        object.__setattr__(self, "corpus_pairs", tuple(normalized))

    def corpus_ids(self) -> list[str]:
        ids = []
        for a, b in self.corpus_pairs:
            for cid in (a, b):
                if cid not in ids:
                    ids.append(cid)
        return ids

    def to_dict(self) -> dict:
        return {"name": self.name, "corpus_pairs": [list(p) for p in self.corpus_pairs]}

    @classmethod
    def from_dict(cls, d: dict) -> "PairScope":
        return cls(name=d["name"], corpus_pairs=tuple(tuple(p) for p in d["corpus_pairs"]))


@dataclass
class ScopePairs:
    """Lazy pair stream plus the bookkeeping counts the reports need.

    all_possible_count is the squared segment total (ordered pairs
    including self-pairs), which is what reduction factors are quoted
    against; distinct_pairs counts unordered non-self pairs actually
    generated.
    """

    scope: PairScope
    vocabulary: Vocabulary
    vectors: dict[str, SegmentVector]
    segment_count: int
    all_possible_count: int
    distinct_pairs: int
    _stream: Callable[[], Iterator[tuple[str, str, float]]] = field(repr=False)

    def pairs(self) -> Iterator[tuple[str, str, float]]:
        return self._stream()


def generate_scope_pairs(scope: PairScope, corpora: dict[str, list[Segment]]) -> ScopePairs:
    """Score every unordered in-scope pair under one shared vocabulary."""
    for corpus_id in scope.corpus_ids():
        if corpus_id not in corpora:
            raise UnknownCorpus(f"scope {scope.name!r} references unknown corpus {corpus_id!r}")

    union: list[Segment] = []
    for corpus_id in scope.corpus_ids():
        union.extend(corpora[corpus_id])
    vocab = build_vocabulary(union)
    vectors = {s.segment_id: vectorize(s, vocab) for s in union}

    n_total = len(union)
    distinct = 0
    for a, b in scope.corpus_pairs:
        if a == b:
            n = len(corpora[a])
            distinct += n * (n - 1) // 2
        else:
            distinct += len(corpora[a]) * len(corpora[b])

    def stream() -> Iterator[tuple[str, str, float]]:
        for a, b in scope.corpus_pairs:
            if a == b:
                segs = corpora[a]
                for i in range(1, len(segs)):
                    vi = vectors[segs[i].segment_id]
                    for j in range(i):
                        vj = vectors[segs[j].segment_id]
                        yield segs[i].segment_id, segs[j].segment_id, cosine(vi, vj)
            else:
                for sa in corpora[a]:
                    va = vectors[sa.segment_id]
                    for sb in corpora[b]:
                        yield sa.segment_id, sb.segment_id, cosine(va, vectors[sb.segment_id])

    return ScopePairs(
        scope=scope,
        vocabulary=vocab,
        vectors=vectors,
        segment_count=n_total,
        all_possible_count=n_total * n_total,
        distinct_pairs=distinct,
        _stream=stream,
    )


@dataclass
class FiltrationSummary:
    segments: int
    all_possible_count: int
    distinct_pairs: int
    band: tuple[float, float]
    survivors: int
    reduction_factor: float

    def to_dict(self) -> dict:
        return {
            "segments": self.segments,
            "all_possible_count": self.all_possible_count,
            "distinct_pairs": self.distinct_pairs,
            "band": list(self.band),
            "survivors": self.survivors,
            "reduction_factor": self.reduction_factor,
        }


def filter_by_similarity(
    pairs: Iterable[tuple[str, str, float]],
    psi_min: float,
    psi_max: float,
) -> list[PoS]:
    """Keep pairs inside the inclusive band [psi_min, psi_max]."""
    if not (0.0 <= psi_min < psi_max <= 1.0):
        raise BadThresholds(f"need 0 <= psi_min < psi_max <= 1, got ({psi_min}, {psi_max})")
    survivors = []
    for segment_a, segment_b, psi in pairs:
        if psi_min <= psi <= psi_max:
            survivors.append(PoS.make(segment_a, segment_b, psi))
    return survivors


def filter_scope(
    scope_pairs: ScopePairs, psi_min: float, psi_max: float
) -> tuple[list[PoS], FiltrationSummary]:
    survivors = filter_by_similarity(scope_pairs.pairs(), psi_min, psi_max)
    reduction = scope_pairs.all_possible_count / len(survivors) if survivors else math.inf
    summary = FiltrationSummary(
        segments=scope_pairs.segment_count,
        all_possible_count=scope_pairs.all_possible_count,
        distinct_pairs=scope_pairs.distinct_pairs,
        band=(psi_min, psi_max),
        survivors=len(survivors),
        reduction_factor=reduction,
    )
    return survivors, summary


def sentence_fingerprint(text: str) -> str:
    """First sentence, lowercased, digits masked: the boilerplate key."""
    sentences = split_sentences(text)
    first = sentences[0] if sentences else text
    return re.sub(r"\s+", " ", re.sub(r"\d", "0", first.lower())).strip()


def filter_boilerplate(
    pos_list: list[PoS],
    segment_text: Callable[[str], str],
    max_pattern_count: int | float | None = 3,
) -> list[PoS]:
    """Cap how many surviving pairs may share one sentence-fingerprint pair.

    Beyond max_pattern_count occurrences (in input order) of the same
    unordered fingerprint pair, pairs are marked filtered_out in place.
    None (or inf) disables the filter. Returns the same list.
    """
    if max_pattern_count is None or max_pattern_count == math.inf:
        return pos_list
    counts: dict[tuple[str, str], int] = {}
    fingerprints: dict[str, str] = {}

    def fp(segment_id: str) -> str:
        if segment_id not in fingerprints:
            fingerprints[segment_id] = sentence_fingerprint(segment_text(segment_id))
        return fingerprints[segment_id]

    for pos in pos_list:
        if pos.status != STATUS_CANDIDATE:
            continue
        key = tuple(sorted((fp(pos.segment_a), fp(pos.segment_b))))
        counts[key] = counts.get(key, 0) + 1
        if counts[key] > max_pattern_count:
            pos.status = STATUS_FILTERED_OUT
    return pos_list
