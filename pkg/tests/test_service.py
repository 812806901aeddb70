"""Guidance service endpoints via the ASGI test client."""

import numpy as np
import pytest
from fastapi.testclient import TestClient

from adtg.corpus import load_corpus
from adtg.service import create_app


@pytest.fixture(scope="module")
def client(tiny_run):
    app = create_app(tiny_run["corpus_dir"], tiny_run["out_dir"], tiny_run["config"])
    with TestClient(app) as c:
        yield c


@pytest.fixture(scope="module")
def corpus(tiny_run):
    return load_corpus(tiny_run["corpus_dir"])


def test_health(client):
    doc = client.get("/health").json()
    assert doc["status"] == "ok"
    assert set(doc["tasks"]) == {"tiny", "forked"}
    assert doc["seeds"] == [0]


def test_stats(client):
    resp = client.get("/corpus/stats")
    assert resp.status_code == 200
    doc = resp.json()
    assert "Null%" in doc["table"]
    assert {row["task_id"] for row in doc["tasks"]} == {"tiny", "forked"}


def test_graph_json_and_dot(client):
    doc = client.get("/graphs/tiny").json()
    assert "<eos>" in doc["nodes"]
    assert doc["dot"] is None
    doc = client.get("/graphs/tiny", params={"fmt": "dot"}).json()
    assert doc["dot"].startswith('digraph "tiny"')
    assert client.get("/graphs/nope").status_code == 404


def test_session_track_advance_recommend(client, corpus):
    task = corpus.tasks["tiny"]
    video = task.videos[task.video_ids()[0]]
    resp = client.post("/sessions", json={"task_id": "tiny"})
    assert resp.status_code == 200
    sid = resp.json()["session_id"]

    # feed the first half of the video; predictions must be valid names
    for t in range(1, video.duration // 2):
        resp = client.post(f"/sessions/{sid}/track",
                           json={"features": video.features[t - 1].tolist()})
        assert resp.status_code == 200
        doc = resp.json()
        assert doc["action"] in list(task.vocab.actions) + ["<null>"]
        assert len(doc["candidates"]) == len(doc["log_probs"])
        assert abs(sum(np.exp(doc["log_probs"])) - 1.0) < 1e-6

    resp = client.post(f"/sessions/{sid}/advance", json={"action": task.vocab.actions[0]})
    assert resp.status_code == 200
    assert resp.json()["last_action"] == task.vocab.actions[0]

    resp = client.post(f"/sessions/{sid}/recommend")
    assert resp.status_code == 200
    doc = resp.json()
    assert doc["action"] in list(task.vocab.actions) + ["<eos>"]

    assert client.delete(f"/sessions/{sid}").status_code == 200
    assert client.post(f"/sessions/{sid}/recommend").status_code == 404


def test_session_validation(client):
    assert client.post("/sessions", json={"task_id": "nope"}).status_code == 404
    resp = client.post("/sessions", json={"task_id": "tiny"})
    sid = resp.json()["session_id"]
    assert client.post(f"/sessions/{sid}/track",
                       json={"features": [0.0, 1.0]}).status_code == 422
    assert client.post(f"/sessions/{sid}/advance",
                       json={"action": "<null>"}).status_code == 422
    assert client.post(f"/sessions/{sid}/recommend").status_code == 422  # nothing tracked


def test_stateless_recommend(client, corpus):
    actions = corpus.tasks["tiny"].vocab.actions
    resp = client.post("/recommend", json={"task_id": "tiny", "history": [actions[0]]})
    assert resp.status_code == 200
    doc = resp.json()
    assert doc["history"] == [actions[0]]
    assert doc["candidates"]
    assert client.post("/recommend", json={"task_id": "tiny", "history": []}).status_code == 422
    assert client.post("/recommend",
                       json={"task_id": "tiny", "history": ["bogus"]}).status_code == 422


def test_plan_endpoint_matches_cli_path(client, corpus, tiny_run):
    from adtg.pipeline import cmd_plan

    video_id = corpus.tasks["forked"].video_ids()[0]
    resp = client.post("/plan", json={"video_id": video_id, "prefix_cut": 0})
    assert resp.status_code == 200
    doc = resp.json()
    direct = cmd_plan(tiny_run["corpus_dir"], tiny_run["out_dir"], tiny_run["config"],
                      video_id, 0)
    assert doc["plan"] == direct["plan"]
    assert doc["miou"] == pytest.approx(direct["miou"])
    assert client.post("/plan", json={"video_id": "nope"}).status_code == 422


def test_openapi_schema_has_models(client):
    doc = client.get("/openapi.json").json()
    names = set(doc["components"]["schemas"])
    assert {"TrackRequest", "ScoredResponse", "PlanRequest", "PlanResponse"} <= names
