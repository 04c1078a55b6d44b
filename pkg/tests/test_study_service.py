import json
import threading
from collections import Counter

import numpy as np
import pytest
import requests

from artstudio.errors import ValidationError
from artstudio.motionlab import FrameSequence, write_sequence
from artstudio.psychstats import ingest_ratings
from artstudio.service import RatingsLog, StudyService
from artstudio.study import SessionPlan, StudyConfig, Trial, make_plan


# -- plans ---------------------------------------------------------------------

def test_make_plan_deterministic_and_structured():
    a = make_plan(7, "P01")
    b = make_plan(7, "P01")
    assert a == b
    assert len(a.trials) == 4
    assert {t.pair_id for t in a.trials} == {"abstract", "portrait"}
    for pair in ("abstract", "portrait"):
        speeds = [t.speed for t in a.trials if t.pair_id == pair]
        assert sorted(speeds) == ["fast", "slow"]
    assert a.trials[0].stimulus.startswith("/api/stimulus/")


def test_make_plan_rejects_bad_ids():
    for bad in ("", "p 1", "a/b", "xé"):
        with pytest.raises(ValidationError):
            make_plan(1, bad)


def test_make_plan_uniform_over_orderings():
    counts = Counter()
    n = 10000
    for i in range(n):
        plan = make_plan(123, f"P{i}")
        key = tuple((t.pair_id, t.speed) for t in plan.trials)
        counts[key] += 1
    assert len(counts) == 8
    expected = n / 8
    sigma = (n * (1 / 8) * (7 / 8)) ** 0.5
    for key, c in counts.items():
        assert abs(c - expected) < 3.5 * sigma, (key, c)


def test_session_plan_validates_structure():
    trials = tuple(
        Trial("abstract", s, "/x") for s in ("slow", "fast", "slow", "fast")
    )
    with pytest.raises(ValidationError):
        SessionPlan("P", trials)


# -- service -------------------------------------------------------------------

def make_stimuli(root):
    registry = {}
    rng = np.random.default_rng(0)
    for pair in ("abstract", "portrait"):
        registry[pair] = {}
        for speed, n in (("fast", 3), ("slow", 6)):
            frames = [rng.integers(0, 256, (16, 16, 3), dtype=np.uint8)
                      for _ in range(n)]
            d = root / pair / speed
            write_sequence(FrameSequence(frames, fps=10), d)
            registry[pair][speed] = str(d)
    return registry


@pytest.fixture()
def live_service(tmp_path):
    config = StudyConfig(
        stimuli=make_stimuli(tmp_path),
        study_seed=99,
        ratings_path=str(tmp_path / "ratings.csv"),
        bind="127.0.0.1:0",
    )
    service = StudyService(config)
    server = service.make_server(port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{server.server_address[1]}"
    yield base, service
    server.shutdown()
    server.server_close()
    thread.join(timeout=5)


def rating_payload(plan, i, scores=(5, 6, 5)):
    trial = plan["trials"][i]
    return {
        "participant_id": plan["participant_id"],
        "pair_id": trial["pair_id"],
        "speed": trial["speed"],
        "presentation_index": i,
        "likability": scores[0],
        "aesthetic_pleasantness": scores[1],
        "artistic_value": scores[2],
        "timestamp": "2026-02-01T12:00:00+00:00",
    }


def test_service_round_trip(live_service):
    base, service = live_service
    resp = requests.get(f"{base}/api/plan", params={"participant": "P01"})
    assert resp.status_code == 200
    plan = resp.json()
    assert len(plan["trials"]) == 4

    manifest = requests.get(f"{base}{plan['trials'][0]['stimulus']}/manifest")
    assert manifest.status_code == 200
    assert manifest.json()["fps"] == "10/1"

    frame = requests.get(f"{base}{plan['trials'][0]['stimulus']}/frames/0")
    assert frame.status_code == 200
    assert frame.content[:8] == b"\x89PNG\r\n\x1a\n"

    for i in range(4):
        r = requests.post(f"{base}/api/ratings", json=rating_payload(plan, i))
        assert r.status_code == 201, r.text

    export = requests.get(f"{base}/api/export.csv")
    assert export.status_code == 200
    result = ingest_ratings(service.log.path)
    assert len(result.records) == 4
    assert result.rejected == []
    assert result.excluded == set()


def test_service_validation_and_duplicates(live_service):
    base, service = live_service
    plan = requests.get(f"{base}/api/plan", params={"participant": "P02"}).json()

    bad = rating_payload(plan, 0)
    bad["likability"] = 9
    r = requests.post(f"{base}/api/ratings", json=bad)
    assert r.status_code == 400
    assert "likability" in r.json()["error"]

    unknown = rating_payload(plan, 0)
    unknown["mood"] = "great"
    assert requests.post(f"{base}/api/ratings", json=unknown).status_code == 400

    ok = rating_payload(plan, 0)
    assert requests.post(f"{base}/api/ratings", json=ok).status_code == 201
    before = service.log.path.read_bytes()
    dup = dict(ok, likability=2)
    r = requests.post(f"{base}/api/ratings", json=dup)
    assert r.status_code == 409
    assert service.log.path.read_bytes() == before

    assert requests.get(f"{base}/api/plan").status_code == 400
    assert requests.get(f"{base}/api/stimulus/abstract/medium/manifest").status_code == 404
    assert requests.get(f"{base}/api/stimulus/abstract/slow/frames/99").status_code == 404
    assert requests.get(f"{base}/nothing/here").status_code == 404


def test_ratings_log_quarantines_torn_line(tmp_path):
    path = tmp_path / "ratings.csv"
    header = ("participant_id,pair_id,speed,presentation_index,likability,"
              "aesthetic_pleasantness,artistic_value,timestamp_iso8601")
    good = "P01,abstract,slow,0,5,5,5,2026-02-01T12:00:00+00:00"
    torn = "P01,abstract,fa"  # crash mid-append
    path.write_text(header + "\r\n" + good + "\r\n" + torn)
    log = RatingsLog(path)
    assert log.cells == {("P01", "abstract", "slow")}
    assert path.read_bytes().endswith((good + "\r\n").encode())
    quarantine = tmp_path / "ratings.csv.quarantine"
    assert torn in quarantine.read_text()
    result = ingest_ratings(path)
    assert result.rejected == []
    assert len(result.records) == 1
