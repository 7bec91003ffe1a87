from __future__ import annotations

import json
import re

import pytest
from fastapi.testclient import TestClient

from mlbcap.errors import Conflict, Degenerate, NotFound, Validation
from mlbcap.evalserve import (
    MODE_BEST_WORST,
    MODE_RANK,
    AnnotationService,
    AnnotationStore,
    build_app,
    create_tasks,
)
from mlbcap.metrics import fleiss_kappa
from mlbcap.prompts import Track, TrackKind

from conftest import PNG_BYTES

BACKEND_IDS = ["role-a", "role-b", "role-c", "role-d", "rater-mock", "desc-mock", "judge-mock"]

NUMBER_WORDS = ["one", "two", "three", "four"]


def results_file(tmp_path, n=5, incomplete=()):
    rows = []
    for i in range(n):
        candidates = {
            label: f"Candidate {NUMBER_WORDS[j]} text for figure number {i}."
            for j, label in enumerate(["A", "B", "C", "D"])
        }
        if i in incomplete:
            candidates.pop("D")
        rows.append(
            {
                "figure_id": f"fig{i}",
                "description": f"Description for figure number {i}.",
                "candidates": candidates,
                "judgment": {
                    "good": "D", "bad": "A",
                    "improved_caption": f"Improved caption {NUMBER_WORDS[i % 4]}.",
                    "word_count_ok": True,
                },
            }
        )
    path = tmp_path / "results.jsonl"
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))
    return path


def make_service(tmp_path, mode=MODE_BEST_WORST, seed=3, n=5, image_refs=None):
    tasks = create_tasks(
        results_file(tmp_path, n=n),
        mode,
        seed,
        track=Track(TrackKind.LONG),
        image_refs=image_refs,
    )
    store = AnnotationStore(tmp_path / "responses.jsonl")
    return AnnotationService(tasks, store)


# --- create_tasks ---

def test_one_task_per_figure(tmp_path):
    tasks = create_tasks(results_file(tmp_path, n=91), MODE_BEST_WORST, 1)
    assert len(tasks) == 91
    assert [t.task_id for t in tasks][:2] == ["t0001", "t0002"]


def test_same_seed_same_shuffles(tmp_path):
    a = create_tasks(results_file(tmp_path, n=10), MODE_BEST_WORST, 5)
    b = create_tasks(results_file(tmp_path, n=10), MODE_BEST_WORST, 5)
    assert [t.shuffled for t in a] == [t.shuffled for t in b]


def test_different_seeds_differ_somewhere(tmp_path):
    a = create_tasks(results_file(tmp_path, n=10), MODE_BEST_WORST, 5)
    b = create_tasks(results_file(tmp_path, n=10), MODE_BEST_WORST, 6)
    assert [t.shuffled for t in a] != [t.shuffled for t in b]


def test_incomplete_candidates_skipped(tmp_path):
    tasks = create_tasks(results_file(tmp_path, n=5, incomplete=(1, 3)), MODE_BEST_WORST, 1)
    assert len(tasks) == 3
    assert [t.figure_id for t in tasks] == ["fig0", "fig2", "fig4"]


def test_all_24_permutations_occur_across_1000_figures(tmp_path):
    tasks = create_tasks(results_file(tmp_path, n=1000), MODE_BEST_WORST, 9)
    seen = {tuple(label for _key, label in task.shuffled) for task in tasks}
    assert len(seen) == 24


def test_texts_follow_shuffle(tmp_path):
    task = create_tasks(results_file(tmp_path, n=1), MODE_BEST_WORST, 2)[0]
    for (key, label), (key2, text) in zip(task.shuffled, task.texts):
        assert key == key2
        index = ["A", "B", "C", "D"].index(label)
        assert NUMBER_WORDS[index] in text


# --- task flow ---

def test_next_task_progression(tmp_path):
    service = make_service(tmp_path, n=3)
    first = service.next_task("judge1")
    assert first.task_id == "t0001"
    service.submit_response({"task_id": "t0001", "judge_id": "judge1", "best": "1", "worst": "2"})
    assert service.next_task("judge1").task_id == "t0002"
    # second judge progresses independently
    assert service.next_task("judge2").task_id == "t0001"


def test_next_task_none_when_done(tmp_path):
    service = make_service(tmp_path, n=2)
    for task_id in ("t0001", "t0002"):
        service.submit_response(
            {"task_id": task_id, "judge_id": "j", "best": "1", "worst": "4"}
        )
    assert service.next_task("j") is None
    assert service.progress("j") == (2, 2)


def test_submit_validation_best_equals_worst(tmp_path):
    service = make_service(tmp_path)
    with pytest.raises(Validation):
        service.submit_response({"task_id": "t0001", "judge_id": "j", "best": "2", "worst": "2"})


def test_submit_unknown_task(tmp_path):
    service = make_service(tmp_path)
    with pytest.raises(NotFound):
        service.submit_response({"task_id": "zzz", "judge_id": "j", "best": "1", "worst": "2"})


def test_submit_idempotent_exact_duplicate(tmp_path):
    service = make_service(tmp_path)
    payload = {"task_id": "t0001", "judge_id": "j", "best": "1", "worst": "3"}
    service.submit_response(dict(payload))
    service.submit_response(dict(payload))
    stored = (tmp_path / "responses.jsonl").read_text().strip().splitlines()
    assert len(stored) == 1


def test_submit_conflicting_duplicate(tmp_path):
    service = make_service(tmp_path)
    service.submit_response({"task_id": "t0001", "judge_id": "j", "best": "1", "worst": "3"})
    with pytest.raises(Conflict):
        service.submit_response({"task_id": "t0001", "judge_id": "j", "best": "2", "worst": "3"})


def test_store_reload_resumes(tmp_path):
    service = make_service(tmp_path, n=2)
    service.submit_response({"task_id": "t0001", "judge_id": "j", "best": "1", "worst": "2"})
    fresh_store = AnnotationStore(tmp_path / "responses.jsonl")
    fresh = AnnotationService(service.tasks, fresh_store)
    assert fresh.next_task("j").task_id == "t0002"


def test_rank_mode_requires_full_permutation(tmp_path):
    service = make_service(tmp_path, mode=MODE_RANK)
    with pytest.raises(Validation):
        service.submit_response({"task_id": "t0001", "judge_id": "j", "ranking": ["1", "2"]})
    service.submit_response(
        {"task_id": "t0001", "judge_id": "j", "ranking": ["2", "1", "4", "3"]}
    )


# --- agreement export ---

def submit_best_of_label(service, judge_id, label, worst_label=None):
    """Each judge picks the display key that maps to the given hidden label."""
    for task in service.tasks:
        by_label = {l: k for k, l in task.shuffled}
        best = by_label[label]
        worst = by_label[worst_label] if worst_label else next(
            k for k, l in task.shuffled if l != label
        )
        service.submit_response(
            {"task_id": task.task_id, "judge_id": judge_id, "best": best, "worst": worst}
        )


def test_export_unanimous_d_kappa_one(tmp_path):
    service = make_service(tmp_path, n=4)
    for judge_id in ("j1", "j2", "j3"):
        submit_best_of_label(service, judge_id, "D")
    rows, report = service.export_agreement()
    assert report.fleiss_kappa == 1.0
    assert report.n_raters == 3 and report.n_items == 4
    assert all(row["best"] == "D" for row in rows)


def test_export_matches_metrics_oracle(tmp_path):
    service = make_service(tmp_path, n=3)
    picks = {  # figure index -> labels picked by (j1, j2, j3)
        0: ("D", "D", "C"),
        1: ("C", "C", "D"),
        2: ("D", "D", "D"),
    }
    for judge_index, judge_id in enumerate(("j1", "j2", "j3")):
        for task in service.tasks:
            figure_index = int(task.figure_id.replace("fig", ""))
            label = picks[figure_index][judge_index]
            by_label = {l: k for k, l in task.shuffled}
            worst = next(k for k, l in task.shuffled if l != label)
            service.submit_response(
                {"task_id": task.task_id, "judge_id": judge_id, "best": by_label[label], "worst": worst}
            )
    _rows, report = service.export_agreement()
    expected_table = [
        [0, 0, 1, 2],
        [0, 0, 2, 1],
        [0, 0, 0, 3],
    ]
    assert report.fleiss_kappa == pytest.approx(fleiss_kappa(expected_table), abs=1e-12)


def test_export_reversed_ranks_tau_minus_one(tmp_path):
    service = make_service(tmp_path, mode=MODE_RANK, n=3)
    for task in service.tasks:
        service.submit_response(
            {"task_id": task.task_id, "judge_id": "j1", "ranking": ["1", "2", "3", "4"]}
        )
        service.submit_response(
            {"task_id": task.task_id, "judge_id": "j2", "ranking": ["4", "3", "2", "1"]}
        )
    _rows, report = service.export_agreement()
    assert report.kendall_tau == pytest.approx(-1.0)


def test_export_insufficient_overlap(tmp_path):
    service = make_service(tmp_path, n=2)
    service.submit_response({"task_id": "t0001", "judge_id": "j1", "best": "1", "worst": "2"})
    with pytest.raises(Degenerate):
        service.export_agreement()
    service.submit_response({"task_id": "t0002", "judge_id": "j2", "best": "1", "worst": "2"})
    with pytest.raises(Degenerate):
        service.export_agreement()


# --- HTTP surface ---

@pytest.fixture
def client(tmp_path):
    image_dir = tmp_path / "img"
    image_dir.mkdir()
    image_refs = {}
    for i in range(3):
        path = image_dir / f"fig{i}.png"
        path.write_bytes(PNG_BYTES + bytes([i]))
        image_refs[f"fig{i}"] = str(path)
    service = make_service(tmp_path, n=3, image_refs=image_refs)
    app = build_app(service)
    return TestClient(app)


def test_http_task_cycle(client):
    task = client.get("/api/tasks/next", params={"judge": "j1"}).json()
    assert task["task_id"] == "t0001"
    assert sorted(task["candidates"]) == ["1", "2", "3", "4"]
    assert task["progress"] == {"answered": 0, "total": 3}
    ack = client.post(
        "/api/responses",
        json={"task_id": task["task_id"], "judge_id": "j1", "best": "1", "worst": "4"},
    )
    assert ack.status_code == 200
    progress = client.get("/api/progress", params={"judge": "j1"}).json()
    assert progress == {"answered": 1, "total": 3}


def test_http_error_codes(client):
    response = client.post(
        "/api/responses", json={"task_id": "t0001", "judge_id": "j", "best": "1", "worst": "1"}
    )
    assert response.status_code == 400
    assert response.json()["code"] == "VALIDATION"
    response = client.post(
        "/api/responses", json={"task_id": "nope", "judge_id": "j", "best": "1", "worst": "2"}
    )
    assert response.status_code == 404
    client.post(
        "/api/responses", json={"task_id": "t0001", "judge_id": "j", "best": "1", "worst": "2"}
    )
    conflicting = client.post(
        "/api/responses", json={"task_id": "t0001", "judge_id": "j", "best": "2", "worst": "1"}
    )
    assert conflicting.status_code == 409
    assert conflicting.json()["code"] == "CONFLICT"


def test_http_export_requires_token(client, monkeypatch):
    monkeypatch.setenv("MLBCAP_OPERATOR_TOKEN", "s3cret")
    assert client.get("/api/export").status_code == 401
    assert (
        client.get("/api/export", headers={"Authorization": "Bearer wrong"}).status_code == 401
    )


def test_http_export_with_token(client, monkeypatch):
    monkeypatch.setenv("MLBCAP_OPERATOR_TOKEN", "s3cret")
    for judge in ("j1", "j2"):
        while True:
            task = client.get("/api/tasks/next", params={"judge": judge}).json()
            if task["task_id"] is None:
                break
            client.post(
                "/api/responses",
                json={"task_id": task["task_id"], "judge_id": judge, "best": "2", "worst": "3"},
            )
    response = client.get("/api/export", headers={"Authorization": "Bearer s3cret"})
    assert response.status_code == 200
    body = response.json()
    assert body["report"]["n_raters"] == 2
    assert body["report"]["fleiss_kappa"] == 1.0  # both judges picked display 2 everywhere


def test_http_image_endpoint(client, tmp_path):
    response = client.get("/api/figures/fig1/image")
    assert response.status_code == 200
    assert response.headers["content-type"] == "image/png"
    assert response.content == PNG_BYTES + bytes([1])
    assert client.get("/api/figures/unknown/image").status_code == 404


def test_deidentification_full_session(client):
    """No client-facing byte stream may leak hidden labels or backend names."""
    bodies = []

    def record(response):
        bodies.append(response.content)
        return response

    for judge in ("judge-one", "judge-two"):
        while True:
            response = record(client.get("/api/tasks/next", params={"judge": judge}))
            task = response.json()
            if task["task_id"] is None:
                break
            record(
                client.post(
                    "/api/responses",
                    json={
                        "task_id": task["task_id"],
                        "judge_id": judge,
                        "best": "1" if judge == "judge-one" else "4",
                        "worst": "2",
                    },
                )
            )
            record(client.get("/api/progress", params={"judge": judge}))

    assert len(bodies) > 10
    blob = b"\n".join(bodies)
    for backend_id in BACKEND_IDS:
        assert backend_id.encode() not in blob
    assert not re.search(rb'"[A-D]"', blob)
    assert b"hidden" not in blob and b"backend" not in blob
    assert b"shuffled" not in blob


def test_client_payload_has_no_label_fields(tmp_path):
    service = make_service(tmp_path, n=1)
    view = service.tasks[0].client_view(0, 1)
    serialized = json.dumps(view)
    assert not re.search(r'"[A-D]"', serialized)
    assert set(view) == {
        "task_id", "figure_id", "image_url", "mode", "track", "candidates", "progress",
    }
