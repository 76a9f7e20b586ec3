import json

import pytest

from speclint.errors import (
    CorruptLayout,
    DanglingReference,
    LockHeldElsewhere,
    PairNotSampled,
    PathNotEmpty,
    UnknownPair,
    VersionMismatch,
    WrongPhase,
)
from speclint.store import (
    STATE_AWAITING,
    canonical_json,
    init_project,
    load_project,
)
from tests.conftest import LogicalClock, make_small_project


def sample_first_pairs(project, phase, n=2):
    items = [
        {"pair_id": pid, "label": "neutral", "probs": {"entailment": 0.2, "contradiction": 0.2, "neutral": 0.6}, "confidence": 0.5}
        for pid in list(project.pairs)[:n]
    ]
    project.append_event({"type": "phase_sample", "phase": phase, "items": items})
    project.set_phase_state(phase, STATE_AWAITING)
    return [item["pair_id"] for item in items]


def test_init_creates_layout_and_round_trips(tmp_path):
    project = make_small_project(tmp_path / "p")
    for sub in ("corpora", "pairs", "phases"):
        assert (tmp_path / "p" / sub).is_dir()
    assert (tmp_path / "p" / "manifest.json").exists()
    reloaded = load_project(tmp_path / "p", read_only=True)
    assert reloaded.manifest.to_dict() == project.manifest.to_dict()
    project.close()


def test_init_refuses_nonempty_dir(tmp_path):
    target = tmp_path / "p"
    target.mkdir()
    (target / "junk.txt").write_text("x")
    from speclint.store import ProjectManifest

    manifest = ProjectManifest(
        project_id="x", created_at="t", corpora=[], scopes=[], bands={}, members=[]
    )
    with pytest.raises(PathNotEmpty):
        init_project(target, manifest)


def test_save_load_save_byte_identical(tmp_path):
    clock = LogicalClock()
    project = make_small_project(tmp_path / "p", clock=clock)
    project.close()

    before = {
        path.relative_to(tmp_path / "p"): path.read_bytes()
        for path in (tmp_path / "p").rglob("*")
        if path.is_file() and path.name != "project.lock"
    }
    loaded = load_project(tmp_path / "p")
    loaded.write_manifest()
    loaded.save_segments("c", loaded.segments["c"])
    loaded.close()
    after = {
        path.relative_to(tmp_path / "p"): path.read_bytes()
        for path in (tmp_path / "p").rglob("*")
        if path.is_file() and path.name != "project.lock"
    }
    assert before == after


def test_version_mismatch(tmp_path):
    project = make_small_project(tmp_path / "p")
    project.close()
    manifest_path = tmp_path / "p" / "manifest.json"
    data = json.loads(manifest_path.read_text())
    data["format_version"] = "99"
    manifest_path.write_text(json.dumps(data))
    with pytest.raises(VersionMismatch):
        load_project(tmp_path / "p")


def test_annotation_validations(tmp_path):
    project = make_small_project(tmp_path / "p")
    with pytest.raises(UnknownPair):
        project.record_annotation("nope|nothing", 1, "me", 1)
    pair_id = next(iter(project.pairs))
    with pytest.raises(WrongPhase):
        project.record_annotation(pair_id, 1, "me", 1)  # still 'paired'
    sampled = sample_first_pairs(project, 1)
    other = [pid for pid in project.pairs if pid not in sampled][0]
    with pytest.raises(PairNotSampled):
        project.record_annotation(other, 1, "me", 1)
    annotation = project.record_annotation(sampled[0], 2, "me", 1)
    assert annotation.replaced_prediction == "neutral"
    assert project.pairs[sampled[0]].status == "annotated"
    project.close()


def test_supersession_keeps_audit_trail(tmp_path):
    project = make_small_project(tmp_path / "p")
    sampled = sample_first_pairs(project, 1)
    project.record_annotation(sampled[0], 3, "alice", 1)
    project.record_annotation(sampled[0], 2, "bob", 1)
    rows = [a for a in project.annotations if a.pair_id == sampled[0]]
    assert len(rows) == 2
    assert rows[0].superseded and not rows[1].superseded
    active = project.active_annotations()
    assert [a.case for a in active if a.pair_id == sampled[0]] == [2]
    # resubmitting the same case changes nothing but the audit log
    before = [a.case for a in project.active_annotations()]
    project.record_annotation(sampled[0], 2, "bob", 1)
    assert [a.case for a in project.active_annotations()] == before
    project.close()


def test_dangling_annotation_detected_on_load(tmp_path):
    project = make_small_project(tmp_path / "p")
    sampled = sample_first_pairs(project, 1)
    project.record_annotation(sampled[0], 1, "me", 1)
    project.close()
    annotations_path = tmp_path / "p" / "annotations.jsonl"
    row = json.loads(annotations_path.read_text().splitlines()[0])
    row["pair_id"] = "ghost|pair"
    row["seq"] += 50
    with open(annotations_path, "a") as handle:
        handle.write(json.dumps(row) + "\n")
    with pytest.raises(DanglingReference):
        load_project(tmp_path / "p")


def test_torn_final_line_discarded_with_warning(tmp_path, caplog):
    project = make_small_project(tmp_path / "p")
    sampled = sample_first_pairs(project, 1)
    project.record_annotation(sampled[0], 1, "me", 1)
    snapshot = project.snapshot()
    project.close()
    events_path = tmp_path / "p" / "events.jsonl"
    with open(events_path, "a") as handle:
        handle.write('{"seq": 999, "type": "status_ch')  # torn mid-write
    reloaded = load_project(tmp_path / "p")
    assert reloaded.snapshot() == snapshot
    reloaded.close()


def test_torn_interior_line_is_corruption(tmp_path):
    project = make_small_project(tmp_path / "p")
    sample_first_pairs(project, 1)
    project.close()
    events_path = tmp_path / "p" / "events.jsonl"
    lines = events_path.read_text().splitlines()
    lines[0] = lines[0][: len(lines[0]) // 2]
    events_path.write_text("\n".join(lines) + "\n")
    with pytest.raises(CorruptLayout):
        load_project(tmp_path / "p")


def test_kill_and_reload_after_every_event(tmp_path):
    clock = LogicalClock()
    project = make_small_project(tmp_path / "p", clock=clock)
    sampled = sample_first_pairs(project, 1, n=3)
    checks = 0
    for pid in sampled:
        project.record_annotation(pid, (checks % 7) + 1, "oracle", 1)
        reloaded = load_project(tmp_path / "p", read_only=True, clock=clock)
        assert reloaded.snapshot() == project.snapshot()
        checks += 1
    other = [pid for pid in project.pairs if pid not in sampled]
    for pid in other:
        project.append_event({"type": "status_change", "pair_id": pid, "status": "predicted"})
        reloaded = load_project(tmp_path / "p", read_only=True, clock=clock)
        assert reloaded.snapshot() == project.snapshot()
        checks += 1
    assert checks >= 6
    project.close()


def test_second_writer_locked_out(tmp_path):
    project = make_small_project(tmp_path / "p")
    second = load_project(tmp_path / "p")
    with pytest.raises(LockHeldElsewhere):
        second.append_event({"type": "status_change", "pair_id": "x|y", "status": "candidate"})
    # readers stay lock-free
    reader = load_project(tmp_path / "p", read_only=True)
    assert reader.manifest.project_id == "small"
    project.close()
    # lock released: the second handle can now write
    second.append_event(
        {"type": "status_change", "pair_id": next(iter(project.pairs)), "status": "predicted"}
    )
    second.close()


def test_canonical_json_is_key_sorted_and_stable():
    a = canonical_json({"b": 1, "a": [1.5, 2], "c": {"y": None, "x": "ü"}})
    b = canonical_json({"c": {"x": "ü", "y": None}, "a": [1.5, 2], "b": 1})
    assert a == b
    assert a == '{"a":[1.5,2],"b":1,"c":{"x":"ü","y":null}}'


def test_missing_manifest_is_corrupt_layout(tmp_path):
    (tmp_path / "empty").mkdir()
    with pytest.raises(CorruptLayout):
        load_project(tmp_path / "empty")
