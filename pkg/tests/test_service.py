import json

import pytest
from fastapi.testclient import TestClient

from bwsq.annotate import AnnotatorId, Judgment, JudgmentStore
from bwsq.corpus import export
from bwsq.design import DesignParams, generate_design, save_design
from bwsq.service import (Campaign, ServiceError, app_from_files, create_app,
                          load_campaign, save_campaign)

from helpers import corpus


@pytest.fixture
def deployment(tmp_path):
    """Corpus, design, campaign, and journal laid out like a real run."""
    c = corpus(8)
    design = generate_design(c, DesignParams(k=4, n_rounds_per_record=1, seed=0))
    export(c, tmp_path / "corpus.jsonl")
    save_design(design, tmp_path / "design.jsonl")
    ids = [t.tuple_id for t in design.tuples]
    campaign = {
        "name": "trial",
        "corpus": "corpus.jsonl",
        "design": "design.jsonl",
        "annotators": {"alice": ids[:3], "bob": ids[3:5]},
    }
    (tmp_path / "campaign.json").write_text(json.dumps(campaign), encoding="utf-8")
    return tmp_path, design, campaign


def client_for(tmp_path) -> TestClient:
    app = app_from_files(tmp_path / "campaign.json", tmp_path / "journal.jsonl")
    return TestClient(app)


def post_judgment(client, annotator, tuple_id, best=1, worst=4):
    return client.post("/api/v1/judgments", json={
        "annotator_id": annotator, "tuple_id": tuple_id,
        "best_index": best, "worst_index": worst})


def test_assignment_flow_until_done(deployment):
    tmp_path, design, campaign = deployment
    client = client_for(tmp_path)
    assigned = campaign["annotators"]["alice"]
    texts_by_tuple = {t.tuple_id: t.member_ids for t in design.tuples}

    for i, expected_tuple in enumerate(assigned, start=1):
        r = client.get("/api/v1/assignments/next", params={"annotator": "alice"})
        assert r.status_code == 200
        body = r.json()
        assert body["tuple_id"] == expected_tuple
        assert body["position"] == i and body["total"] == 3
        assert body["k"] == 4 and len(body["texts"]) == 4
        assert len(texts_by_tuple[body["tuple_id"]]) == 4
        assert post_judgment(client, "alice", body["tuple_id"]).status_code == 201

    done = client.get("/api/v1/assignments/next", params={"annotator": "alice"})
    assert done.status_code == 204


def test_next_unknown_annotator_is_404(deployment):
    tmp_path, _, _ = deployment
    r = client_for(tmp_path).get("/api/v1/assignments/next",
                                 params={"annotator": "mallory"})
    assert r.status_code == 404
    assert "mallory" in r.json()["reason"]


def test_judgment_validation(deployment):
    tmp_path, design, campaign = deployment
    client = client_for(tmp_path)
    alice_tuple = campaign["annotators"]["alice"][0]
    bob_tuple = campaign["annotators"]["bob"][0]

    cases = [
        ({"annotator_id": 5, "tuple_id": alice_tuple, "best_index": 1,
          "worst_index": 2}, "must be strings"),
        ({"annotator_id": "mallory", "tuple_id": alice_tuple, "best_index": 1,
          "worst_index": 2}, "unknown annotator"),
        ({"annotator_id": "alice", "tuple_id": bob_tuple, "best_index": 1,
          "worst_index": 2}, "not assigned"),
        ({"annotator_id": "alice", "tuple_id": alice_tuple, "best_index": 0,
          "worst_index": 2}, "1..4"),
        ({"annotator_id": "alice", "tuple_id": alice_tuple, "best_index": 5,
          "worst_index": 2}, "1..4"),
        ({"annotator_id": "alice", "tuple_id": alice_tuple, "best_index": True,
          "worst_index": 2}, "1..4"),
        ({"annotator_id": "alice", "tuple_id": alice_tuple, "best_index": "1",
          "worst_index": 2}, "1..4"),
        ({"annotator_id": "alice", "tuple_id": alice_tuple, "best_index": 3,
          "worst_index": 3}, "differ"),
    ]
    for body, fragment in cases:
        r = client.post("/api/v1/judgments", json=body)
        assert r.status_code == 422, body
        assert fragment in r.json()["reason"]
    # nothing slipped into the journal
    assert client.get("/api/v1/export").text == ""


def test_duplicate_post_is_idempotent(deployment):
    tmp_path, _, campaign = deployment
    client = client_for(tmp_path)
    t = campaign["annotators"]["alice"][0]

    first = post_judgment(client, "alice", t, best=2, worst=3)
    assert first.status_code == 201
    assert first.json() == {"status": "accepted", "duplicate": False}

    again = post_judgment(client, "alice", t, best=2, worst=3)
    assert again.status_code == 201
    assert again.json() == {"status": "accepted", "duplicate": True}

    conflicting = post_judgment(client, "alice", t, best=1, worst=4)
    assert conflicting.status_code == 422
    assert "different picks" in conflicting.json()["reason"]

    rows = [json.loads(l) for l in
            client.get("/api/v1/export").text.strip().splitlines()]
    assert len(rows) == 1   # replays never duplicated the row


def test_progress_counts(deployment):
    tmp_path, _, campaign = deployment
    client = client_for(tmp_path)
    post_judgment(client, "alice", campaign["annotators"]["alice"][0])
    post_judgment(client, "bob", campaign["annotators"]["bob"][0])
    p = client.get("/api/v1/progress").json()
    assert p["campaign"] == "trial"
    assert p["annotators"]["alice"] == {"judged": 1, "total": 3}
    assert p["annotators"]["bob"] == {"judged": 1, "total": 2}
    assert abs(p["overall"] - 2 / 5) < 1e-12


def test_journal_replay_restores_state(deployment):
    tmp_path, _, campaign = deployment
    client = client_for(tmp_path)
    judged = campaign["annotators"]["alice"][:2]
    for t in judged:
        post_judgment(client, "alice", t, best=1, worst=2)

    # simulate a process restart: fresh app over the same journal
    reborn = client_for(tmp_path)
    p = reborn.get("/api/v1/progress").json()
    assert p["annotators"]["alice"]["judged"] == 2
    nxt = reborn.get("/api/v1/assignments/next", params={"annotator": "alice"})
    assert nxt.json()["tuple_id"] == campaign["annotators"]["alice"][2]
    # a duplicate of replayed work is still deduplicated
    r = post_judgment(reborn, "alice", judged[0], best=1, worst=2)
    assert r.json()["duplicate"] is True


def test_replay_ignores_invalid_journal_rows(deployment):
    tmp_path, _, campaign = deployment
    t = campaign["annotators"]["alice"][0]
    store = JudgmentStore(tmp_path / "journal.jsonl")
    store.append(Judgment(t, AnnotatorId("human", "alice"), None, None, False,
                          raw_response="aborted"))
    client = client_for(tmp_path)
    nxt = client.get("/api/v1/assignments/next", params={"annotator": "alice"})
    assert nxt.json()["tuple_id"] == t  # invalid row did not consume the slot


def test_campaign_must_match_design(deployment):
    tmp_path, _, campaign = deployment
    campaign["annotators"]["alice"] = ["t999999"]
    (tmp_path / "campaign.json").write_text(json.dumps(campaign), encoding="utf-8")
    with pytest.raises(ServiceError, match="t999999"):
        app_from_files(tmp_path / "campaign.json", tmp_path / "journal.jsonl")


def test_campaign_file_requires_keys(tmp_path):
    (tmp_path / "bad.json").write_text('{"corpus": "c.jsonl"}', encoding="utf-8")
    with pytest.raises(ServiceError, match="design"):
        load_campaign(tmp_path / "bad.json")


def test_campaign_round_trip(tmp_path, deployment):
    src, _, _ = deployment
    campaign = load_campaign(src / "campaign.json")
    save_campaign(campaign, tmp_path / "copy.json")
    back = load_campaign(tmp_path / "copy.json")
    assert back == campaign


def test_placeholder_page_without_static(deployment):
    tmp_path, _, _ = deployment
    r = client_for(tmp_path).get("/")
    assert r.status_code == 200
    assert "/api/v1/" in r.text


def test_static_dir_is_served(deployment):
    tmp_path, _, _ = deployment
    static = tmp_path / "dist"
    static.mkdir()
    (static / "index.html").write_text("<h1>annotation UI</h1>", encoding="utf-8")
    app = app_from_files(tmp_path / "campaign.json", tmp_path / "journal.jsonl",
                         static_dir=static)
    r = TestClient(app).get("/")
    assert "annotation UI" in r.text
