"""HTTP/JSON face of the mining session: one writer per session, reads run free.

Endpoints mirror the session operations. Mutating calls take the session's
lock without blocking and answer 409 when another writer holds it; every error
body is machine-readable: {"error": {"code": ..., "message": ...}}.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import asdict
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .data import DataError, SchemaError
from .model import ModelError
from .scoring import DlParams
from .search import SearchParams
from .session import (
    DatasetRef,
    OrderingError,
    Session,
    SessionError,
    StaleIdError,
    assimilate_choice,
    mine_next,
    pattern_detail,
    session_to_dict,
)

__all__ = ["SessionStore", "create_app", "serve"]


class SessionStore:
    """In-memory session registry with a per-session writer lock."""

    def __init__(self) -> None:
        self._sessions: dict[str, Session] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    def create(self, session: Session) -> str:
        sid = uuid.uuid4().hex[:12]
        with self._registry_lock:
            self._sessions[sid] = session
            self._locks[sid] = threading.Lock()
        return sid

    def get(self, sid: str) -> Session:
        try:
            return self._sessions[sid]
        except KeyError:
            raise KeyError(f"unknown session {sid!r}") from None

    def lock(self, sid: str) -> threading.Lock:
        return self._locks[sid]

    def ids(self) -> list[str]:
        return list(self._sessions)


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": {"code": code, "message": message}})


def _candidate_payload(session: Session, record) -> dict:
    from .session import _record_to_dict

    payload = _record_to_dict(record, session.dataset)
    payload["description"] = record.pattern.intention.describe(session.dataset)
    payload["coverage"] = len(record.pattern.extension)
    return payload


def create_app(store: Optional[SessionStore] = None, ui_dir: Optional[str] = None) -> FastAPI:
    store = store if store is not None else SessionStore()
    app = FastAPI(title="sgmine session service")
    app.state.store = store

    @app.exception_handler(Exception)
    async def unhandled(request: Request, exc: Exception):
        return _error(500, "internal", str(exc))

    def _with_writer(sid: str, fn):
        try:
            session = store.get(sid)
        except KeyError as exc:
            return _error(404, "unknown_session", str(exc))
        lock = store.lock(sid)
        if not lock.acquire(blocking=False):
            return _error(409, "busy", "another update for this session is in flight")
        try:
            return fn(session)
        except StaleIdError as exc:
            return _error(410, "stale_pattern", str(exc))
        except OrderingError as exc:
            return _error(409, "ordering", str(exc))
        except (SessionError, SchemaError, DataError, ModelError, ValueError, TypeError) as exc:
            return _error(400, "invalid_request", str(exc))
        finally:
            lock.release()

    @app.post("/sessions", status_code=201)
    def create_session(body: dict):
        try:
            ref = DatasetRef.from_dict(body.get("dataset", {}))
            session = Session.create(
                ref,
                gamma=float(body.get("gamma", 0.1)),
                eta=float(body.get("eta", 1.0)),
                seed=int(body.get("seed", 0)),
            )
        except (SessionError, SchemaError, DataError, ValueError, OSError) as exc:
            return _error(400, "invalid_dataset", str(exc))
        sid = store.create(session)
        return {
            "id": sid,
            "iteration": session.iteration,
            "n": session.dataset.n,
            "d_y": session.dataset.d_y,
            "target_names": list(session.dataset.target_names),
        }

    @app.get("/sessions/{sid}")
    def get_session(sid: str):
        try:
            session = store.get(sid)
        except KeyError as exc:
            return _error(404, "unknown_session", str(exc))
        return session_to_dict(session)

    @app.post("/sessions/{sid}/mine")
    def mine(sid: str, body: Optional[dict] = None):
        body = body or {}

        def run(session: Session):
            kind = body.get("kind", "location")
            raw = dict(body.get("params", {}))
            params = SearchParams(**raw) if raw else SearchParams()
            records = mine_next(session, kind, params, two_sparse=bool(body.get("two_sparse")))
            return {
                "kind": kind,
                "iteration": session.iteration,
                "candidates": [_candidate_payload(session, r) for r in records],
            }

        return _with_writer(sid, run)

    @app.post("/sessions/{sid}/assimilate")
    def assimilate_endpoint(sid: str, body: dict):
        def run(session: Session):
            timing = assimilate_choice(session, str(body.get("pattern_id", "")))
            return {
                "iteration": session.iteration,
                "timing": asdict(timing),
                "assimilated": list(session.assimilated),
            }

        return _with_writer(sid, run)

    @app.get("/sessions/{sid}/patterns/{pid}")
    def pattern(sid: str, pid: str):
        try:
            session = store.get(sid)
        except KeyError as exc:
            return _error(404, "unknown_session", str(exc))
        try:
            detail = pattern_detail(session, pid)
        except StaleIdError as exc:
            return _error(404, "unknown_pattern", str(exc))
        return asdict(detail)

    @app.post("/sessions/{sid}/reset")
    def reset(sid: str):
        def run(session: Session):
            session.reset()
            return {"iteration": session.iteration}

        return _with_writer(sid, run)

    @app.get("/sessions/{sid}/timings")
    def timings(sid: str):
        try:
            session = store.get(sid)
        except KeyError as exc:
            return _error(404, "unknown_session", str(exc))
        return {"timings": [asdict(t) for t in session.timings]}

    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def serve(
    store: Optional[SessionStore] = None,
    port: int = 8765,
    host: str = "127.0.0.1",
    ui_dir: Optional[str] = None,
) -> None:
    """Run the service until interrupted."""
    import uvicorn

    app = create_app(store, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")
