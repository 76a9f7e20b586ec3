"""Easy Data Augmentation for synthetic training pairs.

Four word-level perturbations (synonym replacement, random insertion,
random swap, random deletion) generate label-preserving variants; the
phase trainer tops its human-annotated set up with ceil(N/10) synthetics.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from pathlib import Path

from .classifier import NEGATION_CUES, LabeledExample
from .corpus import DEFAULT_CUE_TERMS
from .errors import EmptyText
from .taxonomy import NLI_LABELS

# words whose replacement would flip modality or polarity of a directive
PROTECTED_WORDS = frozenset(DEFAULT_CUE_TERMS) | frozenset(NEGATION_CUES)

SYNTHETIC_QUOTA_DIVISOR = 10


@dataclass(frozen=True)
class EdaParams:
    alpha_sr: float = 0.1
    alpha_ri: float = 0.1
    alpha_rs: float = 0.1
    p_rd: float = 0.1
    n_aug: int = 1
    seed: int = 0

    def __post_init__(self):
        for name in ("alpha_sr", "alpha_ri", "alpha_rs", "p_rd"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.n_aug < 1:
            raise ValueError("n_aug must be >= 1")

    def to_dict(self) -> dict:
        return {
            "alpha_sr": self.alpha_sr,
            "alpha_ri": self.alpha_ri,
            "alpha_rs": self.alpha_rs,
            "p_rd": self.p_rd,
            "n_aug": self.n_aug,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EdaParams":
        return cls(**d)


class SynonymLexicon:
    """Case-insensitive word -> synonyms map from a plain-text file.

    File format: one `term: syn1, syn2` entry per line; '#' starts a
    comment. A term never lists itself as a synonym.
    """

    def __init__(self, entries: dict[str, list[str]] | None = None):
        self._entries: dict[str, list[str]] = {}
        for term, synonyms in (entries or {}).items():
            key = term.lower().strip()
            cleaned = [s.lower().strip() for s in synonyms]
            cleaned = [s for s in cleaned if s and s != key]
            if key and cleaned:
                self._entries[key] = cleaned

    @classmethod
    def from_file(cls, path: str | Path) -> "SynonymLexicon":
        entries: dict[str, list[str]] = {}
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            line = line.split("#", 1)[0].strip()
            if not line or ":" not in line:
                continue
            term, _, rest = line.partition(":")
            entries[term] = [s for s in (p.strip() for p in rest.split(",")) if s]
        return cls(entries)

    @classmethod
    def bundled(cls) -> "SynonymLexicon":
        return cls.from_file(Path(__file__).parent / "data" / "synonyms.txt")

    def synonyms(self, word: str) -> list[str]:
        return self._entries.get(word.lower(), [])

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, word: str) -> bool:
        return word.lower() in self._entries


def _variant(text: str, params: EdaParams, lexicon: SynonymLexicon, seed: int, index: int) -> str:
    rng = random.Random(seed * 1_000_003 + index)
    words = text.split()
    n = len(words)

    # synonym replacement: non-protected words only
    n_sr = math.ceil(params.alpha_sr * n)
    if n_sr:
        candidates = [
            i for i, w in enumerate(words) if w.lower() not in PROTECTED_WORDS and w in lexicon
        ]
        for i in rng.sample(candidates, min(n_sr, len(candidates))):
            words[i] = rng.choice(lexicon.synonyms(words[i]))

    # random insertion of a synonym of an existing word
    n_ri = math.ceil(params.alpha_ri * n)
    for _ in range(n_ri):
        with_synonyms = [w for w in words if w in lexicon]
        if not with_synonyms:
            break
        source = rng.choice(with_synonyms)
        words.insert(rng.randint(0, len(words)), rng.choice(lexicon.synonyms(source)))

    # random swap
    n_rs = math.ceil(params.alpha_rs * n)
    for _ in range(n_rs):
        if len(words) < 2:
            break
        i, j = rng.sample(range(len(words)), 2)
        words[i], words[j] = words[j], words[i]

    # random deletion, guaranteed nonempty result
    if params.p_rd > 0.0:
        survivors = [w for w in words if rng.random() >= params.p_rd]
        if not survivors:
            survivors = [words[rng.randrange(len(words))]]
        words = survivors

    return " ".join(words)


def eda_variants(text: str, params: EdaParams, lexicon: SynonymLexicon) -> list[str]:
    """n_aug perturbed variants of `text`, deterministic per (seed, index)."""
    if not text.split():
        raise EmptyText("cannot augment empty text")
    return [_variant(text, params, lexicon, params.seed, i) for i in range(params.n_aug)]


def _largest_remainder(quota: int, counts: list[int]) -> list[int]:
    total = sum(counts)
    raw = [quota * c / total for c in counts]
    base = [int(x) for x in raw]
    leftover = quota - sum(base)
    order = sorted(range(len(counts)), key=lambda i: (raw[i] - base[i], counts[i]), reverse=True)
    for i in order[:leftover]:
        base[i] += 1
    return base


def synthesize_training_pos(
    train_set: list[LabeledExample],
    params: EdaParams,
    lexicon: SynonymLexicon | None = None,
) -> list[LabeledExample]:
    """Exactly ceil(N/10) synthetic examples mirroring the class ratio.

    Sources cycle round-robin within each class; each synthetic perturbs a
    single side (premise and hypothesis alternating) and inherits the
    source label. Per-source seeds are derived as seed XOR source index so
    the result is stable however the work is distributed.
    """
    if not train_set:
        raise EmptyText("train_set must be nonempty")
    lexicon = lexicon or SynonymLexicon.bundled()
    quota = math.ceil(len(train_set) / SYNTHETIC_QUOTA_DIVISOR)

    by_class: dict[str, list[int]] = {label.value: [] for label in NLI_LABELS}
    for index, example in enumerate(train_set):
        by_class[example.label.value].append(index)
    present = [label for label in NLI_LABELS if by_class[label.value]]
    allocation = _largest_remainder(quota, [len(by_class[label.value]) for label in present])

    synthetic: list[LabeledExample] = []
    occurrences: dict[int, int] = {}
    for label, class_quota in zip(present, allocation):
        pool = by_class[label.value]
        for slot in range(class_quota):
            source_index = pool[slot % len(pool)]
            source = train_set[source_index]
            occurrence = occurrences.get(source_index, 0)
            occurrences[source_index] = occurrence + 1
            derived_seed = params.seed ^ source_index
            j = len(synthetic)
            if j % 2 == 0:
                premise = _variant(source.premise, params, lexicon, derived_seed, occurrence)
                hypothesis = source.hypothesis
            else:
                premise = source.premise
                hypothesis = _variant(source.hypothesis, params, lexicon, derived_seed, occurrence)
            synthetic.append(
                LabeledExample(
                    pair_id=f"{source.pair_id}#eda{j}",
                    premise=premise,
                    hypothesis=hypothesis,
                    label=source.label,
                    origin="synthetic_eda",
                )
            )
    return synthetic
