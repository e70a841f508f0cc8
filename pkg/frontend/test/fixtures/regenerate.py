"""Regenerate the JSON fixtures in this directory from the rating service.

Run from the repository root with the miclab package installed:

    python3 frontend/test/fixtures/regenerate.py

Nothing here is hand-written: the session payload is what the service
returned over HTTP for one rater, the accepted response is a body the
service answered 200 to, and every rejected body carries the status code
and detail string the service actually sent back. The TypeScript schema
mirror is tested against these files, so client and service can only
drift if someone forgets to rerun this script after changing the rules.
"""

import copy
import json
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np
from fastapi.testclient import TestClient

from miclab.service import ServiceConfig, create_app
from miclab.signalio import SampleBuffer, save_wav

HERE = Path(__file__).resolve().parent


def build_session(workdir: Path) -> Path:
    """Lay out wav sources and run mushra-init, like an experimenter would."""
    fs = 8000
    rng = np.random.default_rng(21)
    names = {}
    for name in ("ref0", "test0a", "test0b", "ref1", "test1a", "test1b"):
        buf = SampleBuffer(0.1 * rng.standard_normal(fs // 2), fs)
        save_wav(buf, workdir / f"{name}.wav", encoding="float32")
        names[name] = f"{name}.wav"
    config = {
        "id": "ui-fixture",
        "seed": 5,
        "trials": [
            {
                "id": "trial-0",
                "reference": names["ref0"],
                "tests": [
                    {"path": names["test0a"], "condition_label": "condA"},
                    {"path": names["test0b"], "condition_label": "condB"},
                ],
            },
            {
                "id": "trial-1",
                "reference": names["ref1"],
                "tests": [
                    {"path": names["test1a"], "condition_label": "condA"},
                    {"path": names["test1b"], "condition_label": "condB"},
                ],
            },
        ],
    }
    config_path = workdir / "config.json"
    config_path.write_text(json.dumps(config, indent=2))
    out_dir = workdir / "sessions"
    subprocess.run(
        [sys.executable, "-m", "miclab.cli", "mushra-init",
         "--config", str(config_path), "--out-dir", str(out_dir)],
        check=True,
    )
    return out_dir


def main() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        workdir = Path(tmp)
        session_dir = build_session(workdir)
        app = create_app(ServiceConfig(
            session_dir=session_dir,
            response_log_path=workdir / "responses.jsonl",
        ))
        client = TestClient(app)

        payload = client.get("/api/sessions/ui-fixture", params={"rater": "r1"})
        payload.raise_for_status()
        session = payload.json()

        trial = session["trials"][0]
        items = [it["item_id"] for it in trial["items"]]
        good = {
            "rater_id": "r1",
            "trial_id": trial["trial_id"],
            "scores": {item: 20 * k for k, item in enumerate(items)},
            "listen_counts": {item: k + 1 for k, item in enumerate(items)},
        }
        accepted = client.post("/api/sessions/ui-fixture/responses", json=good)
        accepted.raise_for_status()

        def rejected(name: str, mutate) -> dict:
            body = copy.deepcopy(good)
            mutate(body)
            reply = client.post("/api/sessions/ui-fixture/responses", json=body)
            assert reply.status_code == 400, (name, reply.status_code, reply.text)
            return {
                "name": name,
                "body": body,
                "status": reply.status_code,
                "detail": reply.json()["detail"],
            }

        first = items[0]
        rejections = [
            rejected("missing_scores_field", lambda b: b.pop("scores")),
            rejected("empty_rater", lambda b: b.__setitem__("rater_id", "")),
            rejected("unknown_trial", lambda b: b.__setitem__("trial_id", "no-such-trial")),
            rejected("scores_missing_item", lambda b: b["scores"].pop(first)),
            rejected("scores_unknown_item", lambda b: b["scores"].__setitem__("ghost", 50)),
            rejected("score_above_range", lambda b: b["scores"].__setitem__(first, 101)),
            rejected("score_not_integer", lambda b: b["scores"].__setitem__(first, 49.5)),
            rejected("score_boolean", lambda b: b["scores"].__setitem__(first, True)),
            rejected("listen_count_zero", lambda b: b["listen_counts"].__setitem__(first, 0)),
            rejected(
                "listens_missing_item", lambda b: b["listen_counts"].pop(first)
            ),
        ]

        (HERE / "session_payload.json").write_text(
            json.dumps(session, indent=2) + "\n"
        )
        (HERE / "accepted_response.json").write_text(
            json.dumps({"body": good, "reply": accepted.json()}, indent=2) + "\n"
        )
        (HERE / "rejected_responses.json").write_text(
            json.dumps(rejections, indent=2) + "\n"
        )
        print(f"wrote fixtures for session {session['session_id']} "
              f"({len(rejections)} rejected bodies)")


if __name__ == "__main__":
    main()
