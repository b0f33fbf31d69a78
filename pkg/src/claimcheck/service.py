"""HTTP facade over verification sessions.

Each session wraps one engine Session behind a JSON API: create, fetch
the next screen, answer it or skip the claim, read the running report.
Accepted answers and skips are appended to a per-session JSONL log;
restarting the service replays the log through a fresh engine, which
recomputes identical state without double-charging any cost.

Within a session all state changes run under one lock, so an answer that
triggers a retrain simply holds the lock until the models are ready and
the next screen request waits on it.  Other sessions are unaffected.
The first checker to answer becomes the session's writer; answers from
anyone else are rejected.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from .config import SessionConfig, seconds_to_weeks
from .corpus import Corpus, CorpusError, load_corpus
from .engine import MODES, Answer, EngineError, Session
from .harness import manual_cost


class ServiceError(RuntimeError):
    pass


def build_config(overrides: Optional[dict] = None) -> SessionConfig:
    """A session config from JSON-friendly top-level field overrides."""
    overrides = dict(overrides or {})
    try:
        return SessionConfig(**overrides)
    except TypeError as exc:
        raise ServiceError(f"bad config: {exc}") from None


@dataclass
class ApiSession:
    """One live session plus its write-ahead answer log."""

    id: str
    session: Session
    corpus_root: str
    mode: str
    overrides: dict
    log_path: Optional[Path] = None
    writer: Optional[str] = None
    lock: threading.RLock = field(default_factory=threading.RLock)

    def append_log(self, record: dict) -> None:
        if self.log_path is None:
            return
        with self.log_path.open("a", encoding="utf-8") as handle:
            handle.write(json.dumps(record, sort_keys=True) + "\n")


class Service:
    """Session registry with optional log-backed persistence."""

    def __init__(self, log_dir: Optional[Path | str] = None):
        self.sessions: dict[str, ApiSession] = {}
        self.log_dir = Path(log_dir) if log_dir is not None else None
        if self.log_dir is not None:
            self.log_dir.mkdir(parents=True, exist_ok=True)
        self._mutex = threading.Lock()

    def create(self, corpus_root: str, mode: str = "optimized",
               overrides: Optional[dict] = None,
               session_id: Optional[str] = None,
               corpus: Optional[Corpus] = None) -> ApiSession:
        if mode not in MODES:
            raise ServiceError(f"unknown mode {mode!r}")
        overrides = dict(overrides or {})
        if corpus is None:
            corpus = load_corpus(corpus_root)
        config = build_config(overrides)
        session_id = session_id or uuid.uuid4().hex[:12]
        with self._mutex:
            if session_id in self.sessions:
                raise ServiceError(f"session {session_id!r} already exists")
            api = ApiSession(id=session_id, session=Session(corpus, mode, config),
                             corpus_root=corpus_root, mode=mode,
                             overrides=overrides)
            if self.log_dir is not None:
                api.log_path = self.log_dir / f"{session_id}.jsonl"
                api.append_log({"event": "create", "session": session_id,
                                "corpus_root": corpus_root, "mode": mode,
                                "config": overrides})
            self.sessions[session_id] = api
        return api

    def get(self, session_id: str) -> ApiSession:
        api = self.sessions.get(session_id)
        if api is None:
            raise ServiceError(f"unknown session {session_id!r}")
        return api

    def restore(self) -> int:
        """Replay every session log found in the log directory."""
        if self.log_dir is None:
            return 0
        count = 0
        for path in sorted(self.log_dir.glob("*.jsonl")):
            self._restore_one(path)
            count += 1
        return count

    def _restore_one(self, path: Path) -> None:
        records = []
        with path.open(encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if line:
                    records.append(json.loads(line))
        if not records or records[0].get("event") != "create":
            raise ServiceError(f"log {path.name} does not start with create")
        head = records[0]
        corpus = load_corpus(head["corpus_root"])
        config = build_config(head.get("config"))
        api = ApiSession(id=head["session"],
                         session=Session(corpus, head["mode"], config),
                         corpus_root=head["corpus_root"], mode=head["mode"],
                         overrides=dict(head.get("config") or {}),
                         log_path=path)
        for record in records[1:]:
            event = record.get("event")
            if event not in ("answer", "skip"):
                continue
            try:
                if event == "skip":
                    # batches form lazily on the next-screen path
                    api.session.next_screen()
                    api.session.report_failure(record["claim"])
                else:
                    api.session.submit(Answer.from_record(record))
            except EngineError as exc:
                raise ServiceError(
                    f"log {path.name} replay rejected: {exc}") from exc
            if api.writer is None:
                api.writer = record.get("checker")
        with self._mutex:
            self.sessions[api.id] = api


# ---------------------------------------------------------------------------
# request/response plumbing


class CreateSessionBody(BaseModel):
    corpus_root: str
    mode: str = "optimized"
    config: dict = Field(default_factory=dict)
    session_id: Optional[str] = None


class AnswerBody(BaseModel):
    checker: str = "checker-1"
    screen_id: str
    selected: list[int] = Field(default_factory=list)
    suggestion: Optional[str] = None
    verdict: Optional[str] = None


class SkipBody(BaseModel):
    checker: str = "checker-1"
    claim_id: str


def _engine_http_error(exc: EngineError) -> HTTPException:
    detail: dict = {"message": str(exc), "code": exc.code}
    if exc.position is not None:
        detail["position"] = exc.position
    status = {"out_of_order": 409, "done": 409, "parse": 422}.get(exc.code, 422)
    return HTTPException(status_code=status, detail=detail)


def _next_payload(api: ApiSession) -> dict:
    view = api.session.next_screen()
    if view is None:
        return {"done": True, "screen": None,
                "progress": api.session.progress()}
    record = view.to_record()
    record["validated"] = {
        kind: list(values)
        for kind, values in api.session.answered_so_far(view.claim_id).items()
    }
    return {"done": False, "screen": record,
            "progress": api.session.progress()}


def _report_payload(api: ApiSession) -> dict:
    session = api.session
    report = session.report()
    baseline = manual_cost(session.corpus, session.config)
    report["manual_seconds"] = baseline
    report["total_weeks"] = seconds_to_weeks(report["total_seconds"])
    report["savings"] = (1.0 - report["total_seconds"] / baseline
                         if baseline > 0 else 0.0)
    report["batch_claims"] = [
        {"claim_id": claim_id,
         "sentence_text": session.claims[claim_id].sentence_text,
         "claim_span": list(session.claims[claim_id].claim_span),
         "section_id": session.claims[claim_id].section_id}
        for claim_id in session.current_batch
    ]
    report["done"] = session.done
    return report


def create_app(log_dir: Optional[Path | str] = None,
               restore: bool = True) -> FastAPI:
    service = Service(log_dir)
    if restore:
        service.restore()
    app = FastAPI(title="claimcheck service")
    app.state.service = service
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])

    def _session_or_404(session_id: str) -> ApiSession:
        try:
            return service.get(session_id)
        except ServiceError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from None

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody) -> dict:
        try:
            api = service.create(body.corpus_root, body.mode, body.config,
                                 session_id=body.session_id)
        except (ServiceError, CorpusError, FileNotFoundError) as exc:
            status = 409 if "already exists" in str(exc) else 400
            raise HTTPException(status_code=status, detail=str(exc)) from None
        return {"session": api.id, "mode": api.mode,
                "claims": len(api.session.claims)}

    @app.get("/sessions/{session_id}/next")
    def next_screen(session_id: str, checker: str = "checker-1") -> dict:
        api = _session_or_404(session_id)
        with api.lock:
            payload = _next_payload(api)
        payload["checker"] = checker
        return payload

    @app.post("/sessions/{session_id}/answer")
    def answer_screen(session_id: str, body: AnswerBody) -> dict:
        api = _session_or_404(session_id)
        with api.lock:
            if api.writer is not None and body.checker != api.writer:
                raise HTTPException(
                    status_code=409,
                    detail={"message": f"session is driven by {api.writer!r}",
                            "code": "single_writer"})
            record = body.model_dump()
            try:
                answer = Answer.from_record(record)
                ack = api.session.submit(answer)
            except EngineError as exc:
                raise _engine_http_error(exc) from None
            api.writer = body.checker
            api.append_log(dict(record, event="answer"))
        return {"ack": ack, "resolved": ack["claim_resolved"],
                "verdict": ack["verdict"], "done": ack["session_done"]}

    @app.post("/sessions/{session_id}/skip")
    def skip_claim(session_id: str, body: SkipBody) -> dict:
        api = _session_or_404(session_id)
        with api.lock:
            if api.writer is not None and body.checker != api.writer:
                raise HTTPException(
                    status_code=409,
                    detail={"message": f"session is driven by {api.writer!r}",
                            "code": "single_writer"})
            try:
                api.session.next_screen()
                api.session.report_failure(body.claim_id)
            except EngineError as exc:
                raise _engine_http_error(exc) from None
            api.writer = body.checker
            api.append_log({"event": "skip", "claim": body.claim_id,
                            "checker": body.checker})
            progress = api.session.progress()
        return {"skipped": body.claim_id, "progress": progress}

    @app.get("/sessions/{session_id}/report")
    def session_report(session_id: str) -> dict:
        api = _session_or_404(session_id)
        with api.lock:
            return _report_payload(api)

    return app
