"""HTTP service for listening-test sessions: serves blinded trial payloads
and audio clips, ingests responses into an append-only JSON-lines log, and
exposes reports.

Every payload sent to raters is blinded: items appear as opaque ids with
clip references only, never with their role or condition. Roles surface
only in reports.
"""

from __future__ import annotations

import json
import os
import threading
import warnings
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import uvicorn
from fastapi import Body, FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from . import mushra
from .signalio import file_checksum

WAV_MEDIA_TYPE = "audio/wav"


@dataclass(frozen=True)
class ServiceConfig:
    session_dir: Path
    response_log_path: Path
    listen_address: str = "127.0.0.1:8765"
    static_ui_dir: Path | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "session_dir", Path(self.session_dir))
        object.__setattr__(self, "response_log_path", Path(self.response_log_path))
        if self.static_ui_dir is not None:
            object.__setattr__(self, "static_ui_dir", Path(self.static_ui_dir))
        if not self.session_dir.is_dir():
            raise ValueError(f"session_dir {self.session_dir} is not a directory")
        log_parent = self.response_log_path.parent
        if not log_parent.is_dir():
            raise ValueError(f"response log directory {log_parent} does not exist")
        if self.static_ui_dir is not None and not self.static_ui_dir.is_dir():
            raise ValueError(f"static_ui_dir {self.static_ui_dir} is not a directory")

    @property
    def host(self) -> str:
        host, _, _ = self.listen_address.rpartition(":")
        return host or self.listen_address

    @property
    def port(self) -> int:
        _, sep, port = self.listen_address.rpartition(":")
        if not sep:
            return 8765
        try:
            return int(port)
        except ValueError:
            raise ValueError(f"bad listen_address {self.listen_address!r}") from None


class ResponseLog:
    """Append-only JSON-lines file; one response record per line.

    Appends are serialized by a lock and fsynced, so any crash leaves at
    worst one torn final line. Loading discards an unparseable final line
    with a warning; garbage anywhere earlier is corruption and raises.
    """

    def __init__(self, path: str | Path) -> None:
        self._path = Path(path)
        self._lock = threading.Lock()

    @property
    def path(self) -> Path:
        return self._path

    def append(self, record: dict) -> None:
        line = json.dumps(record, sort_keys=True) + "\n"
        with self._lock:
            with open(self._path, "a", encoding="utf-8") as f:
                f.write(line)
                f.flush()
                os.fsync(f.fileno())

    def load(self) -> list[dict]:
        if not self._path.exists():
            return []
        content = self._path.read_text(encoding="utf-8")
        if not content:
            return []
        complete, _, tail = content.rpartition("\n")
        records = []
        for lineno, line in enumerate(complete.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(
                    f"corrupt response log {self._path}, line {lineno}: {exc}"
                ) from exc
        if tail.strip():
            try:
                records.append(json.loads(tail))
            except json.JSONDecodeError:
                warnings.warn(
                    f"discarding torn final line of {self._path}", stacklevel=2
                )
        return records


def _load_sessions(
    session_dir: Path,
) -> tuple[dict[str, mushra.MushraSession], dict[str, Path]]:
    """Read every session JSON and index clips by id, verifying checksums."""
    sessions: dict[str, mushra.MushraSession] = {}
    clips: dict[str, Path] = {}
    checksums: dict[str, str] = {}
    for path in sorted(session_dir.glob("*.json")):
        sess = mushra.load_session(path)
        if sess.id in sessions:
            raise ValueError(f"duplicate session id {sess.id!r} in {session_dir}")
        sessions[sess.id] = sess
        for trial in sess.trials:
            for ref in [trial.reference] + [it.clip for it in trial.items]:
                ref.verify(session_dir)
                resolved = Path(ref.path)
                if not resolved.is_absolute():
                    resolved = session_dir / resolved
                if ref.id in checksums and checksums[ref.id] != ref.checksum:
                    raise ValueError(
                        f"clip id {ref.id!r} registered twice with different content"
                    )
                clips[ref.id] = resolved
                checksums[ref.id] = ref.checksum
    return sessions, clips


def _parse_range(header: str, size: int) -> tuple[int, int] | None:
    """First byte range of a Range header as (start, end) inclusive.

    Returns None when the header should be ignored (serve the full file);
    raises HTTPException(416) when the range is syntactically fine but
    unsatisfiable.
    """
    unit, _, spec = header.partition("=")
    if unit.strip().lower() != "bytes" or not spec or "," in spec:
        return None
    spec = spec.strip()
    start_s, sep, end_s = spec.partition("-")
    if not sep:
        return None
    try:
        if not start_s:  # suffix form: last N bytes
            n = int(end_s)
            if n <= 0:
                raise HTTPException(
                    status_code=416, headers={"Content-Range": f"bytes */{size}"}
                )
            return max(size - n, 0), size - 1
        start = int(start_s)
        end = int(end_s) if end_s else size - 1
    except ValueError:
        return None
    if start >= size or start > end:
        raise HTTPException(
            status_code=416, headers={"Content-Range": f"bytes */{size}"}
        )
    return start, min(end, size - 1)


def create_app(config: ServiceConfig) -> FastAPI:
    sessions, clips = _load_sessions(config.session_dir)
    log = ResponseLog(config.response_log_path)

    # submissions per (session, rater, trial), with the item set last seen,
    # so resubmission revisions are numbered and shape drift is rejected
    submit_index: dict[tuple[str, str, str], tuple[int, frozenset]] = {}
    index_lock = threading.Lock()
    for record in log.load():
        key = (
            str(record.get("session_id", "")),
            str(record.get("rater_id", "")),
            str(record.get("trial_id", "")),
        )
        count, _ = submit_index.get(key, (0, frozenset()))
        submit_index[key] = (count + 1, frozenset(record.get("scores", {})))

    app = FastAPI(title="listening-test service")

    @app.exception_handler(RequestValidationError)
    def bad_request(_request: Request, exc: RequestValidationError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    def _session_or_404(session_id: str) -> mushra.MushraSession:
        sess = sessions.get(session_id)
        if sess is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        return sess

    @app.get("/api/sessions/{session_id}")
    def get_session(session_id: str, rater: str) -> dict:
        sess = _session_or_404(session_id)
        return {
            "session_id": sess.id,
            "rater_id": rater,
            "trials": [
                {
                    "trial_id": trial.id,
                    "reference_clip_id": trial.reference.id,
                    "items": [
                        {"item_id": it.item_id, "clip_id": it.clip.id}
                        for it in mushra.shuffled_items(sess, trial, rater)
                    ],
                }
                for trial in sess.trials
            ],
        }

    @app.post("/api/sessions/{session_id}/responses")
    def post_response(session_id: str, body: dict = Body(...)) -> dict:
        sess = _session_or_404(session_id)
        try:
            resp = mushra.validate_response(sess, body)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        record = resp.to_dict()
        if not record["submitted_at"]:
            record["submitted_at"] = datetime.now(timezone.utc).isoformat()
        record["session_id"] = sess.id
        key = (sess.id, resp.rater_id, resp.trial_id)
        items_now = frozenset(record["scores"])
        with index_lock:
            count, items_before = submit_index.get(key, (0, items_now))
            if count and items_before != items_now:
                raise HTTPException(
                    status_code=409,
                    detail="revision scores a different item set than the "
                           "original submission",
                )
            revision = count + 1
            record["revision"] = revision
            log.append(record)
            submit_index[key] = (revision, items_now)
        return {"status": "ok", "revision": revision}

    @app.get("/api/clips/{clip_id}")
    def get_clip(clip_id: str, request: Request) -> Response:
        path = clips.get(clip_id)
        if path is None:
            raise HTTPException(status_code=404, detail=f"unknown clip {clip_id!r}")
        data = path.read_bytes()
        size = len(data)
        common = {"Accept-Ranges": "bytes"}
        range_header = request.headers.get("range")
        if range_header:
            span = _parse_range(range_header, size)
            if span is not None:
                start, end = span
                return Response(
                    content=data[start:end + 1],
                    status_code=206,
                    media_type=WAV_MEDIA_TYPE,
                    headers={
                        **common,
                        "Content-Range": f"bytes {start}-{end}/{size}",
                    },
                )
        return Response(content=data, media_type=WAV_MEDIA_TYPE, headers=common)

    @app.get("/api/sessions/{session_id}/report")
    def get_report(session_id: str, baseline: str | None = None) -> dict:
        sess = _session_or_404(session_id)
        records = [r for r in log.load() if r.get("session_id") == sess.id]
        responses = [mushra.MushraResponse.from_dict(r) for r in records]
        try:
            return mushra.session_report(sess, responses, baseline_condition=baseline)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None

    if config.static_ui_dir is not None:
        app.mount("/", StaticFiles(directory=config.static_ui_dir, html=True), name="ui")

    return app


def run_service(config: ServiceConfig) -> None:
    uvicorn.run(create_app(config), host=config.host, port=config.port,
                log_level="warning")
