import concurrent.futures
import json
import shutil

import pytest
from fastapi.testclient import TestClient

from miclab.service import ResponseLog, ServiceConfig, create_app
from miclab.signalio import file_checksum

from conftest import full_scores


@pytest.fixture
def service(session_dir, tmp_path):
    sess, sdir = session_dir
    config = ServiceConfig(session_dir=sdir, response_log_path=tmp_path / "log.jsonl")
    app = create_app(config)
    with TestClient(app) as client:
        yield sess, client, config


def post_body(sess, rater, trial_id="t0", **kw):
    scores, listens = full_scores(sess, trial_id)
    scores.update(kw)
    return {"rater_id": rater, "trial_id": trial_id,
            "scores": scores, "listen_counts": listens}


class TestConfig:
    def test_host_port_split(self, tmp_path):
        cfg = ServiceConfig(session_dir=tmp_path, response_log_path=tmp_path / "l",
                            listen_address="0.0.0.0:9000")
        assert cfg.host == "0.0.0.0"
        assert cfg.port == 9000

    def test_default_port_when_no_colon(self, tmp_path):
        cfg = ServiceConfig(session_dir=tmp_path, response_log_path=tmp_path / "l",
                            listen_address="localhost")
        assert cfg.host == "localhost"
        assert cfg.port == 8765

    def test_bad_port_rejected(self, tmp_path):
        cfg = ServiceConfig(session_dir=tmp_path, response_log_path=tmp_path / "l",
                            listen_address="localhost:http")
        with pytest.raises(ValueError):
            _ = cfg.port

    def test_missing_session_dir_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            ServiceConfig(session_dir=tmp_path / "missing",
                          response_log_path=tmp_path / "l")


class TestResponseLog:
    def test_append_load_round_trip(self, tmp_path):
        log = ResponseLog(tmp_path / "r.jsonl")
        log.append({"a": 1})
        log.append({"b": [1, 2]})
        assert log.load() == [{"a": 1}, {"b": [1, 2]}]

    def test_missing_file_is_empty(self, tmp_path):
        assert ResponseLog(tmp_path / "absent.jsonl").load() == []

    def test_torn_final_line_discarded_with_warning(self, tmp_path):
        p = tmp_path / "r.jsonl"
        p.write_text('{"a": 1}\n{"b": 2}\n{"c": tr')
        with pytest.warns(UserWarning, match="torn"):
            records = ResponseLog(p).load()
        assert records == [{"a": 1}, {"b": 2}]

    def test_mid_file_garbage_raises(self, tmp_path):
        p = tmp_path / "r.jsonl"
        p.write_text('{"a": 1}\nnot json at all\n{"b": 2}\n')
        with pytest.raises(ValueError, match="corrupt"):
            ResponseLog(p).load()

    def test_complete_final_line_without_newline_kept(self, tmp_path):
        p = tmp_path / "r.jsonl"
        p.write_text('{"a": 1}\n{"b": 2}')
        assert ResponseLog(p).load() == [{"a": 1}, {"b": 2}]

    def test_concurrent_appends_all_land(self, tmp_path):
        log = ResponseLog(tmp_path / "r.jsonl")
        with concurrent.futures.ThreadPoolExecutor(max_workers=8) as pool:
            list(pool.map(lambda k: log.append({"k": k}), range(50)))
        records = log.load()
        assert sorted(r["k"] for r in records) == list(range(50))


class TestStartup:
    def test_duplicate_session_ids_rejected(self, session_dir, tmp_path):
        _, sdir = session_dir
        shutil.copy(sdir / "sess-disk.json", sdir / "other.json")
        with pytest.raises(ValueError, match="duplicate"):
            create_app(ServiceConfig(session_dir=sdir,
                                     response_log_path=tmp_path / "l"))

    def test_clip_checksum_verified_at_startup(self, session_dir, tmp_path):
        sess, sdir = session_dir
        victim = sdir / sess.trials[0].items[2].clip.path
        victim.write_bytes(b"RIFFgarbage")
        with pytest.raises(ValueError):
            create_app(ServiceConfig(session_dir=sdir,
                                     response_log_path=tmp_path / "l"))


class TestGetSession:
    def test_blinded_payload(self, service):
        sess, client, _ = service
        r = client.get(f"/api/sessions/{sess.id}", params={"rater": "r1"})
        assert r.status_code == 200
        body = r.json()
        assert body["session_id"] == sess.id
        assert len(body["trials"]) == 2

        def walk(node):
            if isinstance(node, dict):
                for key, value in node.items():
                    assert key not in ("role", "condition_label", "screening_rule")
                    walk(value)
            elif isinstance(node, list):
                for value in node:
                    walk(value)
            else:
                assert node not in ("hidden_reference", "anchor")

        walk(body)

    def test_items_cover_the_trial(self, service):
        sess, client, _ = service
        body = client.get(f"/api/sessions/{sess.id}", params={"rater": "r1"}).json()
        got = {it["item_id"] for it in body["trials"][0]["items"]}
        assert got == sess.trials[0].item_ids()

    def test_order_stable_per_rater_and_differs_between_raters(self, service):
        sess, client, _ = service
        def order(rater):
            body = client.get(f"/api/sessions/{sess.id}",
                              params={"rater": rater}).json()
            return [it["item_id"] for t in body["trials"] for it in t["items"]]
        assert order("r1") == order("r1")
        assert any(order(f"q{k}") != order("r1") for k in range(6))

    def test_unknown_session_404(self, service):
        _, client, _ = service
        assert client.get("/api/sessions/nope", params={"rater": "r"}).status_code == 404

    def test_missing_rater_param_is_400(self, service):
        sess, client, _ = service
        assert client.get(f"/api/sessions/{sess.id}").status_code == 400


class TestPostResponse:
    def test_accepts_and_logs(self, service):
        sess, client, config = service
        r = client.post(f"/api/sessions/{sess.id}/responses",
                        json=post_body(sess, "r1"))
        assert r.status_code == 200
        assert r.json() == {"status": "ok", "revision": 1}
        lines = config.response_log_path.read_text().splitlines()
        assert len(lines) == 1
        record = json.loads(lines[0])
        assert record["session_id"] == sess.id
        assert record["revision"] == 1
        assert record["submitted_at"]  # server stamps a time

    def test_resubmission_bumps_revision(self, service):
        sess, client, config = service
        body = post_body(sess, "r1")
        assert client.post(f"/api/sessions/{sess.id}/responses",
                           json=body).json()["revision"] == 1
        body["scores"]["t0-it0"] = 55
        assert client.post(f"/api/sessions/{sess.id}/responses",
                           json=body).json()["revision"] == 2
        assert len(config.response_log_path.read_text().splitlines()) == 2

    def test_out_of_range_score_is_400(self, service):
        sess, client, _ = service
        r = client.post(f"/api/sessions/{sess.id}/responses",
                        json=post_body(sess, "r1", **{"t0-it0": 101}))
        assert r.status_code == 400
        assert "t0-it0" in r.json()["detail"]

    def test_missing_item_is_400(self, service):
        sess, client, _ = service
        body = post_body(sess, "r1")
        del body["scores"]["t0-ia"]
        r = client.post(f"/api/sessions/{sess.id}/responses", json=body)
        assert r.status_code == 400

    def test_unknown_trial_is_400(self, service):
        sess, client, _ = service
        body = post_body(sess, "r1")
        body["trial_id"] = "zz"
        assert client.post(f"/api/sessions/{sess.id}/responses",
                           json=body).status_code == 400

    def test_unknown_session_is_404(self, service):
        sess, client, _ = service
        assert client.post("/api/sessions/zz/responses",
                           json=post_body(sess, "r1")).status_code == 404

    def test_malformed_json_body_is_400(self, service):
        sess, client, _ = service
        r = client.post(f"/api/sessions/{sess.id}/responses",
                        content=b'{"rater_id": ',
                        headers={"content-type": "application/json"})
        assert r.status_code == 400

    def test_non_object_body_is_400(self, service):
        sess, client, _ = service
        r = client.post(f"/api/sessions/{sess.id}/responses", json=[1, 2, 3])
        assert r.status_code == 400

    def test_item_set_drift_is_409(self, session_dir, tmp_path):
        sess, sdir = session_dir
        log_path = tmp_path / "log.jsonl"
        earlier = ResponseLog(log_path)
        earlier.append({
            "session_id": sess.id, "rater_id": "r1", "trial_id": "t0",
            "scores": {"bogus": 50}, "listen_counts": {"bogus": 1},
            "revision": 1, "submitted_at": "2026-01-01T00:00:00+00:00",
        })
        app = create_app(ServiceConfig(session_dir=sdir, response_log_path=log_path))
        with TestClient(app) as client:
            r = client.post(f"/api/sessions/{sess.id}/responses",
                            json=post_body(sess, "r1"))
            assert r.status_code == 409
            # and nothing was appended
            assert len(log_path.read_text().splitlines()) == 1

    def test_concurrent_posts_all_logged(self, service):
        sess, client, config = service
        def post(k):
            return client.post(f"/api/sessions/{sess.id}/responses",
                               json=post_body(sess, f"r{k}")).status_code
        with concurrent.futures.ThreadPoolExecutor(max_workers=8) as pool:
            codes = list(pool.map(post, range(16)))
        assert codes == [200] * 16
        lines = config.response_log_path.read_text().splitlines()
        assert len(lines) == 16
        raters = {json.loads(line)["rater_id"] for line in lines}
        assert raters == {f"r{k}" for k in range(16)}


class TestGetClip:
    def clip_ref(self, sess):
        return sess.trials[0].items[0].clip

    def test_full_body_matches_checksum(self, service):
        sess, client, _ = service
        ref = self.clip_ref(sess)
        r = client.get(f"/api/clips/{ref.id}")
        assert r.status_code == 200
        assert r.headers["content-type"].startswith("audio/wav")
        assert r.headers["accept-ranges"] == "bytes"
        import hashlib
        assert hashlib.sha256(r.content).hexdigest() == ref.checksum

    def test_unknown_clip_404(self, service):
        _, client, _ = service
        assert client.get("/api/clips/nope").status_code == 404

    def test_prefix_range(self, service):
        sess, client, config = service
        ref = self.clip_ref(sess)
        size = (config.session_dir / ref.path).stat().st_size
        r = client.get(f"/api/clips/{ref.id}", headers={"Range": "bytes=0-99"})
        assert r.status_code == 206
        assert len(r.content) == 100
        assert r.headers["content-range"] == f"bytes 0-99/{size}"

    def test_open_ended_range(self, service):
        sess, client, config = service
        ref = self.clip_ref(sess)
        size = (config.session_dir / ref.path).stat().st_size
        r = client.get(f"/api/clips/{ref.id}", headers={"Range": "bytes=100-"})
        assert r.status_code == 206
        assert len(r.content) == size - 100

    def test_suffix_range(self, service):
        sess, client, _ = service
        ref = self.clip_ref(sess)
        r = client.get(f"/api/clips/{ref.id}", headers={"Range": "bytes=-50"})
        assert r.status_code == 206
        assert len(r.content) == 50

    def test_range_past_the_end_is_416(self, service):
        sess, client, config = service
        ref = self.clip_ref(sess)
        size = (config.session_dir / ref.path).stat().st_size
        r = client.get(f"/api/clips/{ref.id}",
                       headers={"Range": f"bytes={size + 10}-"})
        assert r.status_code == 416
        assert r.headers["content-range"] == f"bytes */{size}"

    def test_malformed_range_served_whole(self, service):
        sess, client, config = service
        ref = self.clip_ref(sess)
        size = (config.session_dir / ref.path).stat().st_size
        r = client.get(f"/api/clips/{ref.id}", headers={"Range": "bytes=a-b"})
        assert r.status_code == 200
        assert len(r.content) == size

    def test_multi_range_served_whole(self, service):
        sess, client, _ = service
        ref = self.clip_ref(sess)
        r = client.get(f"/api/clips/{ref.id}", headers={"Range": "bytes=0-1,4-5"})
        assert r.status_code == 200

    def test_ranges_reassemble_to_the_file(self, service):
        sess, client, _ = service
        ref = self.clip_ref(sess)
        whole = client.get(f"/api/clips/{ref.id}").content
        a = client.get(f"/api/clips/{ref.id}",
                       headers={"Range": f"bytes=0-{len(whole)//2 - 1}"}).content
        b = client.get(f"/api/clips/{ref.id}",
                       headers={"Range": f"bytes={len(whole)//2}-"}).content
        assert a + b == whole


class TestReport:
    def test_report_reflects_posted_responses(self, service):
        sess, client, _ = service
        for rater in ("a", "b", "c"):
            for trial in ("t0", "t1"):
                body = post_body(sess, rater, trial)
                assert client.post(f"/api/sessions/{sess.id}/responses",
                                   json=body).status_code == 200
        r = client.get(f"/api/sessions/{sess.id}/report")
        assert r.status_code == 200
        rep = r.json()
        assert rep["n_responses_used"] == 6
        assert {c["condition_label"] for c in rep["conditions"]} >= {"condA", "condB"}

    def test_report_with_baseline(self, service):
        sess, client, _ = service
        for rater in ("a", "b"):
            for trial in ("t0", "t1"):
                client.post(f"/api/sessions/{sess.id}/responses",
                            json=post_body(sess, rater, trial))
        rep = client.get(f"/api/sessions/{sess.id}/report",
                         params={"baseline": "condA"}).json()
        assert any(c["condition_label"] == "condB" for c in rep["comparisons"])

    def test_unknown_baseline_is_400(self, service):
        sess, client, _ = service
        client.post(f"/api/sessions/{sess.id}/responses", json=post_body(sess, "a"))
        r = client.get(f"/api/sessions/{sess.id}/report",
                       params={"baseline": "nope"})
        assert r.status_code == 400

    def test_unknown_session_404(self, service):
        _, client, _ = service
        assert client.get("/api/sessions/zz/report").status_code == 404

    def test_empty_log_gives_empty_report(self, service):
        sess, client, _ = service
        rep = client.get(f"/api/sessions/{sess.id}/report").json()
        assert rep["n_responses_used"] == 0
        assert rep["conditions"] == []


class TestStaticUi:
    def test_ui_served_when_configured(self, session_dir, tmp_path):
        _, sdir = session_dir
        ui = tmp_path / "ui"
        ui.mkdir()
        (ui / "index.html").write_text("<!doctype html><p>rating page</p>")
        config = ServiceConfig(session_dir=sdir,
                               response_log_path=tmp_path / "log.jsonl",
                               static_ui_dir=ui)
        with TestClient(create_app(config)) as client:
            r = client.get("/")
            assert r.status_code == 200
            assert "rating page" in r.text
            # API routes still take precedence
            assert client.get("/api/sessions/zz/report").status_code == 404

    def test_no_ui_by_default(self, service):
        _, client, _ = service
        assert client.get("/").status_code == 404
