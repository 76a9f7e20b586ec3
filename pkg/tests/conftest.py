from __future__ import annotations

import itertools

import pytest

from speclint.corpus import Segment


def make_segments(texts: list[str], corpus_id: str = "c") -> list[Segment]:
    return [
        Segment(
            segment_id=f"{corpus_id}:{i + 1:05d}",
            section_path="4.1",
            paragraph_index=i,
            text=text,
            token_count=len(text.split()),
        )
        for i, text in enumerate(texts)
    ]


class LogicalClock:
    """Deterministic ISO timestamps for byte-reproducible runs."""

    def __init__(self, start: int = 0):
        self.counter = itertools.count(start)

    def __call__(self) -> str:
        tick = next(self.counter)
        return f"2026-01-01T00:00:{tick % 60:02d}.{tick:06d}Z"


@pytest.fixture
def logical_clock():
    return LogicalClock()


def make_small_project(path, clock=None, n_segments: int = 6, members=None):
    """A minimal real project: one corpus, pairs over all segments, paired state."""
    from speclint.augment import EdaParams
    from speclint.pairing import PairScope, filter_scope, generate_scope_pairs
    from speclint.store import STATE_PAIRED, ProjectManifest, init_project, utc_now

    texts = [
        f"the terminal shall perform action{i} with cause #{i + 10} and enter state{i % 3}"
        for i in range(n_segments)
    ]
    segments = make_segments(texts, "c")
    from speclint.corpus import CorpusProfile

    manifest = ProjectManifest(
        project_id="small",
        created_at=clock() if clock else utc_now(),
        corpora=[CorpusProfile(corpus_id="c")],
        scopes=[PairScope(name="s", corpus_pairs=(("c", "c"),))],
        bands={"s": (0.0, 1.0)},
        members=members
        or [{"kind": "native", "model_id": f"m{i}", "seed": i} for i in range(3)],
        sample_size=3,
        k_phases=2,
        eda=EdaParams(seed=1),
    )
    kwargs = {"clock": clock} if clock else {}
    project = init_project(path, manifest, **kwargs)
    project.save_segments("c", segments)
    scope_pairs = generate_scope_pairs(manifest.scopes[0], {"c": segments})
    survivors, summary = filter_scope(scope_pairs, 0.0, 1.0)
    project.save_pairs("s", survivors, summary)
    project.set_phase_state(0, STATE_PAIRED)
    return project
