import itertools
import math
import random

import pytest

from speclint.errors import BadThresholds, UnknownCorpus
from speclint.pairing import (
    PairScope,
    PoS,
    filter_boilerplate,
    filter_by_similarity,
    filter_scope,
    generate_scope_pairs,
    pair_id_for,
    sentence_fingerprint,
)
from tests.conftest import make_segments


def texts(n, prefix):
    return [f"{prefix} unique{i} shall apply to event{i} here" for i in range(n)]


def test_pair_id_canonical_order():
    assert pair_id_for("b:2", "a:1") == "a:1|b:2"
    assert PoS.make("b:2", "a:1", 0.5).segment_a == "a:1"


def test_unknown_corpus():
    scope = PairScope(name="s", corpus_pairs=(("a", "a"),))
    with pytest.raises(UnknownCorpus):
        generate_scope_pairs(scope, {})


def test_two_corpora_explicit_enumeration():
    """Corpora of sizes 3 and 2 -> 3 intra-A + 1 intra-B + 6 cross = 10 pairs."""
    corpora = {
        "a": make_segments(texts(3, "alpha"), "a"),
        "b": make_segments(texts(2, "beta"), "b"),
    }
    scope = PairScope(name="s", corpus_pairs=(("a", "a"), ("a", "b"), ("b", "b")))
    scope_pairs = generate_scope_pairs(scope, corpora)
    got = {frozenset((x, y)) for x, y, _ in scope_pairs.pairs()}

    ids = [s.segment_id for s in corpora["a"]] + [s.segment_id for s in corpora["b"]]
    expected = {frozenset(c) for c in itertools.combinations(ids, 2)}
    assert got == expected
    assert len(got) == 10
    assert scope_pairs.distinct_pairs == 10
    assert scope_pairs.all_possible_count == 25


@pytest.mark.parametrize("n,expected", [(2599, 6_754_801), (3529, 12_453_841)])
def test_all_possible_count_matches_reported_totals(n, expected):
    corpora = {"a": make_segments([f"shall w{i}" for i in range(n)], "a")}
    scope = PairScope(name="s", corpus_pairs=(("a", "a"),))
    scope_pairs = generate_scope_pairs(scope, corpora)
    assert scope_pairs.all_possible_count == expected
    assert scope_pairs.distinct_pairs == n * (n - 1) // 2


def test_duplicate_scope_entries_collapse():
    scope = PairScope(name="s", corpus_pairs=(("a", "b"), ("b", "a"), ("a", "a")))
    assert scope.corpus_pairs == (("a", "b"), ("a", "a"))


# ----------------------------------------------------------------------
# band filtering
# ----------------------------------------------------------------------
def test_bad_thresholds():
    with pytest.raises(BadThresholds):
        filter_by_similarity([], 0.9, 0.5)
    with pytest.raises(BadThresholds):
        filter_by_similarity([], -0.1, 0.5)
    with pytest.raises(BadThresholds):
        filter_by_similarity([], 0.5, 1.1)


def test_exact_duplicate_filtered_above_band():
    pairs = [("a:1", "a:2", 1.0)]
    assert filter_by_similarity(pairs, 0.65, 0.99) == []


def test_band_is_inclusive():
    pairs = [("a:1", "a:2", 0.65), ("a:1", "a:3", 0.99), ("a:2", "a:3", 0.649999)]
    survivors = filter_by_similarity(pairs, 0.65, 0.99)
    assert [p.psi for p in survivors] == [0.65, 0.99]
    assert all(p.status == "candidate" for p in survivors)


def test_random_pairs_match_brute_force_filter():
    rng = random.Random(4)
    pairs = [(f"a:{i}", f"b:{i}", rng.random()) for i in range(1000)]
    lo, hi = 0.3, 0.8
    survivors = filter_by_similarity(iter(pairs), lo, hi)
    brute = [(a, b, psi) for a, b, psi in pairs if lo <= psi <= hi]
    assert [(p.segment_a, p.segment_b, p.psi) for p in survivors] == [
        (min(a, b), max(a, b), psi) for a, b, psi in brute
    ]
    assert len(survivors) == len(brute)


def test_tightening_band_never_adds_survivors():
    rng = random.Random(8)
    pairs = [(f"a:{i}", f"b:{i}", rng.random()) for i in range(500)]
    wide = {p.pair_id for p in filter_by_similarity(pairs, 0.2, 0.9)}
    narrow = {p.pair_id for p in filter_by_similarity(pairs, 0.3, 0.8)}
    assert narrow <= wide


def test_filter_scope_reduction_factor():
    corpora = {"a": make_segments(texts(40, "word"), "a")}
    scope = PairScope(name="s", corpus_pairs=(("a", "a"),))
    scope_pairs = generate_scope_pairs(scope, corpora)
    survivors, summary = filter_scope(scope_pairs, 0.0, 1.0)
    assert summary.survivors == len(survivors) == 40 * 39 // 2
    assert summary.all_possible_count == 1600
    assert summary.reduction_factor == pytest.approx(1600 / 780)


def test_streamed_equals_materialized():
    corpora = {"a": make_segments(texts(25, "gamma"), "a")}
    scope = PairScope(name="s", corpus_pairs=(("a", "a"),))
    scope_pairs = generate_scope_pairs(scope, corpora)
    materialized = list(scope_pairs.pairs())
    streamed_survivors = filter_by_similarity(iter(materialized), 0.01, 0.99)
    list_survivors = filter_by_similarity(materialized, 0.01, 0.99)
    assert [p.to_dict() for p in streamed_survivors] == [p.to_dict() for p in list_survivors]


# ----------------------------------------------------------------------
# boilerplate suppression
# ----------------------------------------------------------------------
def test_fingerprint_masks_digits_and_case():
    a = sentence_fingerprint("The UE shall wait 15 seconds. Then more text.")
    b = sentence_fingerprint("the ue  shall wait 99 seconds. Unrelated tail.")
    assert a == b == "the ue shall wait 00 seconds."


def test_boilerplate_disabled_is_identity():
    pos = [PoS.make(f"a:{i}", f"b:{i}", 0.7) for i in range(10)]
    out = filter_boilerplate(list(pos), lambda sid: "same text.", max_pattern_count=None)
    assert [p.status for p in out] == ["candidate"] * 10


def test_boilerplate_counting_oracle():
    """10 pairs from one template, cap 2 -> 2 survive, 8 filtered_out."""
    lookup = {}
    pos = []
    for i in range(10):
        a, b = f"a:{i:02d}", f"b:{i:02d}"
        lookup[a] = f"The timer T3{i}10 shall restart. Variant {i} body."
        lookup[b] = f"The timer T3{i}99 shall restart. Other {i} body."
        pos.append(PoS.make(a, b, 0.8))
    out = filter_boilerplate(pos, lookup.__getitem__, max_pattern_count=2)
    statuses = [p.status for p in out]
    assert statuses.count("candidate") == 2
    assert statuses.count("filtered_out") == 8
    assert statuses[:2] == ["candidate", "candidate"]


def test_boilerplate_distinct_fingerprints_untouched():
    lookup = {}
    pos = []
    kinds = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta"]
    for i, kind in enumerate(kinds):
        a, b = f"a:{i}", f"b:{i}"
        lookup[a] = f"Directive {kind} shall run. Tail."
        lookup[b] = f"Directive {kind} shall pause. Tail."
        pos.append(PoS.make(a, b, 0.7))
    out = filter_boilerplate(pos, lookup.__getitem__, max_pattern_count=1)
    assert all(p.status == "candidate" for p in out)


def test_psi_recomputable_from_segments():
    corpora = {"a": make_segments(texts(12, "delta"), "a")}
    scope = PairScope(name="s", corpus_pairs=(("a", "a"),))
    scope_pairs = generate_scope_pairs(scope, corpora)
    survivors, _ = filter_scope(scope_pairs, 0.0, 1.0)
    from speclint.vectorspace import cosine

    for pos in survivors:
        recomputed = cosine(scope_pairs.vectors[pos.segment_a], scope_pairs.vectors[pos.segment_b])
        assert math.isclose(recomputed, pos.psi, abs_tol=1e-9)
