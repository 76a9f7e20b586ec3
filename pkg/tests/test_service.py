import pytest
from fastapi.testclient import TestClient

from speclint.learner import EnsembleRunner
from speclint.service.app import create_app
from speclint.synthharness import PlantSpec, build_synthetic_project, oracle_annotator
from tests.conftest import LogicalClock

SPEC = PlantSpec(n_sections=4, n_fillers=60, plant_rate=0.2, decoy_rate=0.2, seed=8)
TRAINING = {"epochs": 25, "feature_buckets": 64}


@pytest.fixture
def service(tmp_path):
    project, truth = build_synthetic_project(
        tmp_path / "proj",
        SPEC,
        sample_size=10,
        k_phases=2,
        n_filler_gold=8,
        training=TRAINING,
        clock=LogicalClock(),
    )
    app = create_app(project, runner=EnsembleRunner(project))
    with TestClient(app) as client:
        yield client, project, truth
    project.close()


def annotate_queue(client, truth, phase):
    queue = client.get("/api/queue", params={"phase": phase, "limit": 500}).json()
    submitted = 0
    for item in queue["items"]:
        case = oracle_annotator(item, truth)
        response = client.post(
            "/api/annotations",
            json={"pair_id": item["pair_id"], "case": case, "annotator": "oracle"},
        )
        assert response.status_code == 200, response.text
        submitted += 1
    return submitted, queue


def test_static_console_mount(tmp_path):
    project, _ = build_synthetic_project(
        tmp_path / "proj", SPEC, sample_size=5, k_phases=1, clock=LogicalClock()
    )
    ui = tmp_path / "ui"
    ui.mkdir()
    (ui / "index.html").write_text("<html><body>console</body></html>", encoding="utf-8")
    app = create_app(project, static_dir=str(ui))
    with TestClient(app) as client:
        page = client.get("/")
        assert page.status_code == 200
        assert "console" in page.text
        # API routes take precedence over the static mount
        assert client.get("/api/project").status_code == 200
    project.close()


def test_project_summary(service):
    client, project, _ = service
    body = client.get("/api/project").json()
    assert body["project_id"] == project.manifest.project_id
    assert body["phase_state"]["status"] == "paired"
    assert body["segments"] == len(project.segments_by_id)
    assert body["pairs"] == len(project.pairs)


def test_advance_runs_phase0_then_samples_phase1(service):
    client, project, _ = service
    response = client.post("/api/phase/advance")
    assert response.status_code == 200
    body = response.json()
    assert body["completed_phase"] == 0
    assert body["next_phase"] == 1
    assert body["pending"] == 10
    assert body["status"] == "awaiting_annotation"
    assert project.manifest.phase_state == {"current_phase": 1, "status": "awaiting_annotation"}


def test_queue_and_annotation_flow(service):
    client, project, truth = service
    client.post("/api/phase/advance")
    queue = client.get("/api/queue", params={"phase": 1}).json()
    assert queue["total"] == 10
    assert queue["pending"] == 10
    item = queue["items"][0]
    assert set(item["model_prediction"]["probs"]) == {"entailment", "contradiction", "neutral"}
    assert item["segment_a"]["text"]

    case = oracle_annotator(item, truth)
    response = client.post(
        "/api/annotations", json={"pair_id": item["pair_id"], "case": case, "annotator": "me"}
    )
    body = response.json()
    assert response.status_code == 200
    assert body["pending"] == 9
    assert body["nli"] in ("entailment", "contradiction", "neutral")
    assert body["verdict"] in ("consistent", "inconsistent")

    # queue shrinks by one pending
    queue = client.get("/api/queue", params={"phase": 1}).json()
    assert queue["pending"] == 9
    assert sum(1 for q in queue["items"] if q["annotated"]) == 1


def test_gate_blocks_advance_with_exact_pending_count(service):
    client, project, truth = service
    client.post("/api/phase/advance")
    # annotate 7 of 10
    queue = client.get("/api/queue", params={"phase": 1}).json()
    for item in queue["items"][:7]:
        client.post(
            "/api/annotations",
            json={"pair_id": item["pair_id"], "case": oracle_annotator(item, truth), "annotator": "o"},
        )
    response = client.post("/api/phase/advance")
    assert response.status_code == 409
    body = response.json()
    assert body["code"] == "annotation_incomplete"
    assert body["pending"] == 3

    for item in queue["items"][7:]:
        client.post(
            "/api/annotations",
            json={"pair_id": item["pair_id"], "case": oracle_annotator(item, truth), "annotator": "o"},
        )
    response = client.post("/api/phase/advance")
    assert response.status_code == 200
    assert response.json()["completed_phase"] == 1


def test_error_codes_closed_set(service):
    client, project, _ = service
    response = client.post(
        "/api/annotations", json={"pair_id": "ghost|pair", "case": 1, "annotator": "x"}
    )
    assert response.status_code == 404
    assert response.json()["code"] == "unknown_pair"

    existing_pair = next(iter(project.pairs))
    response = client.post(
        "/api/annotations", json={"pair_id": existing_pair, "case": 1, "annotator": "x"}
    )
    assert response.status_code == 409  # nothing is awaiting annotation yet
    assert response.json()["code"] == "wrong_phase"

    client.post("/api/phase/advance")
    unsampled = next(
        pid for pid, pos in project.pairs.items() if pos.status == "candidate"
    )
    response = client.post(
        "/api/annotations", json={"pair_id": unsampled, "case": 1, "annotator": "x"}
    )
    assert response.status_code == 409
    assert response.json()["code"] == "pair_not_sampled"

    existing = next(iter(project.pairs))
    response = client.post(
        "/api/annotations", json={"pair_id": existing, "case": 9, "annotator": "x"}
    )
    assert response.status_code == 400
    assert response.json()["code"] == "bad_request"

    response = client.post("/api/triage", json={"pair_id": existing, "status": "nonsense"})
    assert response.status_code == 400


def run_to_finish(client, truth):
    advanced = client.post("/api/phase/advance").json()
    while advanced.get("status") == "awaiting_annotation":
        phase = advanced["next_phase"]
        queue = client.get("/api/queue", params={"phase": phase, "limit": 500}).json()
        for item in queue["items"]:
            client.post(
                "/api/annotations",
                json={
                    "pair_id": item["pair_id"],
                    "case": oracle_annotator(item, truth),
                    "annotator": "oracle",
                },
            )
        advanced = client.post("/api/phase/advance").json()
    return advanced


def test_results_equal_planted_ground_truth_at_scale(tmp_path):
    """After a full synthetic run, /api/results?verdict=inconsistent returns
    exactly the planted contradictions still in the predicted pool."""
    from speclint.synthharness import resolve_twin_pairs
    from speclint.taxonomy import NLILabel, map_case_to_nli

    spec = PlantSpec(seed=1)
    project, truth = build_synthetic_project(
        tmp_path / "proj", spec, training={"epochs": 120, "feature_buckets": 256}
    )
    app = create_app(project, runner=EnsembleRunner(project))
    with TestClient(app) as client:
        advanced = client.post("/api/phase/advance").json()
        while advanced.get("status") == "awaiting_annotation":
            phase = advanced["next_phase"]
            queue = client.get("/api/queue", params={"phase": phase, "limit": 500}).json()
            for item in queue["items"]:
                client.post(
                    "/api/annotations",
                    json={
                        "pair_id": item["pair_id"],
                        "case": oracle_annotator(item, truth),
                        "annotator": "oracle",
                    },
                )
            advanced = client.post("/api/phase/advance").json()

        results = client.get("/api/results", params={"verdict": "inconsistent"}).json()
        selected = {r["pair_id"] for r in results["items"]}
        twins = resolve_twin_pairs(project, truth)
        planted = {
            pid for pid, case in twins.items()
            if map_case_to_nli(case) is NLILabel.CONTRADICTION
        }
        annotated = {a.pair_id for a in project.annotations}
        assert selected == planted - annotated
    project.close()


def test_full_run_results_and_triage(service):
    client, project, truth = service
    final = run_to_finish(client, truth)
    assert final["status"] == "finished"

    results = client.get("/api/results", params={"verdict": "inconsistent"}).json()
    assert results["total"] >= 1
    confidences = [item["confidence"] for item in results["items"]]
    assert confidences == sorted(confidences, reverse=True)
    assert all(item["verdict"] == "inconsistent" for item in results["items"])

    first = results["items"][0]["pair_id"]
    body = client.post("/api/triage", json={"pair_id": first, "status": "context_fp"}).json()
    assert body["status"] == "triaged_context_fp"
    assert body["context_fp"] == 1

    # re-triage is idempotent on counts
    again = client.post("/api/triage", json={"pair_id": first, "status": "context_fp"}).json()
    assert again["context_fp"] == 1

    flipped = client.post("/api/triage", json={"pair_id": first, "status": "confirmed"}).json()
    assert flipped["context_fp"] == 0

    metrics = client.get("/api/metrics", params={"phase": 2}).json()
    assert metrics["phase"] == 2
    assert 0.0 <= metrics["metrics_ensemble"]["accuracy"] <= 1.0

    # min_confidence filter is monotone
    loose = client.get("/api/results", params={"min_confidence": 0.0}).json()["total"]
    tight = client.get("/api/results", params={"min_confidence": 0.9}).json()["total"]
    assert tight <= loose
