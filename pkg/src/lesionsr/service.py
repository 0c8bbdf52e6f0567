"""HTTP service for blinded MOS rating sessions.

Rater-reachable responses never contain method labels or the sealed key;
the aggregate report becomes available only once a session is complete.
Ratings persist to an append-only JSONL record log, and replaying the log
reconstructs session state exactly (crash safety).
"""

from __future__ import annotations

import base64
import json
import threading
import time
from pathlib import Path

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .errors import DataFormatError, InvalidInputError, LesionSRError
from .metrics import FLAGS, MosRecord, mos_aggregate
from .mos_bundle import load_bundle, load_key, read_item_png


class ConflictError(LesionSRError):
    """Duplicate rating or a report requested before completion."""


class Session:
    def __init__(self, session_id: str, rater_id: str, order: list[str]):
        self.session_id = session_id
        self.rater_id = rater_id
        self.order = list(order)  # fixed at creation
        self.ratings: dict[str, dict] = {}

    @property
    def total(self) -> int:
        return len(self.order)

    @property
    def rated(self) -> int:
        return len(self.ratings)

    @property
    def complete(self) -> bool:
        return self.rated == self.total

    def next_unrated(self):
        for item_id in self.order:
            if item_id not in self.ratings:
                return item_id
        return None


class SessionStore:
    """Sessions over one bundle, persisted to an append-only record log."""

    def __init__(self, bundle_dir, records_path):
        self.bundle_dir = Path(bundle_dir)
        self.items = load_bundle(bundle_dir)
        self.records_path = Path(records_path)
        self.sessions: dict[str, Session] = {}
        self._lock = threading.Lock()
        if self.records_path.exists():
            self._replay()
        else:
            self.records_path.parent.mkdir(parents=True, exist_ok=True)
            self.records_path.touch()

    def _replay(self):
        for line_no, line in enumerate(self.records_path.read_text().splitlines(), 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataFormatError(f"{self.records_path}:{line_no}: invalid JSON ({e})") from e
            if rec.get("kind") == "session":
                self.sessions[rec["session_id"]] = Session(
                    rec["session_id"], rec["rater_id"], rec["order"]
                )
            elif rec.get("kind") == "rating":
                session = self.sessions.get(rec["session_id"])
                if session is None:
                    raise DataFormatError(f"{self.records_path}:{line_no}: rating for unknown session")
                session.ratings[rec["item_id"]] = rec

    def _append(self, record: dict):
        with self.records_path.open("a") as f:
            f.write(json.dumps(record, sort_keys=True) + "\n")
            f.flush()

    def create_session(self, rater_id: str, seed: int) -> Session:
        with self._lock:
            session_id = f"s{len(self.sessions):04d}"
            order = [self.items[i] for i in np.random.default_rng(seed).permutation(len(self.items))]
            session = Session(session_id, rater_id, order)
            self.sessions[session_id] = session
            self._append({"kind": "session", "session_id": session_id, "rater_id": rater_id,
                          "seed": seed, "order": order})
            return session

    def get(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise InvalidInputError(f"unknown session {session_id!r}")
        return session

    def next_item(self, session_id: str):
        """(item id, progress) for the next unrated item, or None when complete."""
        session = self.get(session_id)
        item_id = session.next_unrated()
        if item_id is None:
            return None
        return item_id, session.rated, session.total

    def submit_score(self, session_id: str, item_id: str, score: int, flags) -> None:
        with self._lock:
            session = self.get(session_id)
            if item_id not in session.order:
                raise InvalidInputError(f"item {item_id!r} is not part of this session")
            if item_id in session.ratings:
                raise ConflictError(f"item {item_id!r} already rated")
            MosRecord(image_id=item_id, method="blinded", score=score, flags=tuple(flags))
            record = {"kind": "rating", "session_id": session_id, "item_id": item_id,
                      "score": int(score), "flags": sorted(flags), "rater_id": session.rater_id,
                      "timestamp": time.time()}
            self._append(record)
            session.ratings[item_id] = record

    def report(self, session_ids=None):
        """Aggregate over completed sessions, joined with the sealed key."""
        targets = [self.get(s) for s in session_ids] if session_ids else list(self.sessions.values())
        if not targets:
            raise InvalidInputError("no sessions to report")
        incomplete = [s.session_id for s in targets if not s.complete]
        if incomplete:
            raise ConflictError(f"sessions not complete: {incomplete}")
        key = load_key(self.bundle_dir)
        records = []
        for session in targets:
            for item_id, rec in session.ratings.items():
                entry = key[item_id]
                records.append(
                    MosRecord(
                        image_id=entry["image_id"],
                        method=entry["method"],
                        score=rec["score"],
                        flags=tuple(rec["flags"]),
                        rater_id=rec["rater_id"],
                        timestamp=rec["timestamp"],
                    )
                )
        return mos_aggregate(records)


class CreateSessionRequest(BaseModel):
    rater_id: str = Field(min_length=1)
    seed: int = 0


class RatingRequest(BaseModel):
    item_id: str
    score: int
    flags: list[str] = Field(default_factory=list)


def create_app(store: SessionStore) -> FastAPI:
    app = FastAPI(title="blinded MOS rating service")

    @app.exception_handler(ConflictError)
    async def conflict(request, exc):
        return JSONResponse(status_code=409, content={"error": str(exc)})

    @app.exception_handler(InvalidInputError)
    async def invalid(request, exc):
        return JSONResponse(status_code=422, content={"error": str(exc)})

    @app.post("/api/sessions", status_code=201)
    def create_session(req: CreateSessionRequest):
        session = store.create_session(req.rater_id, req.seed)
        return {"session_id": session.session_id, "rated": session.rated, "total": session.total}

    @app.get("/api/sessions/{session_id}")
    def session_state(session_id: str):
        session = store.get(session_id)
        return {"session_id": session.session_id, "rated": session.rated,
                "total": session.total, "complete": session.complete}

    @app.get("/api/sessions/{session_id}/next")
    def next_item(session_id: str):
        result = store.next_item(session_id)
        session = store.get(session_id)
        if result is None:
            return {"complete": True, "rated": session.rated, "total": session.total}
        item_id, rated, total = result
        png = read_item_png(store.bundle_dir, item_id)
        return {
            "complete": False,
            "item_id": item_id,
            "rated": rated,
            "total": total,
            "image_png_base64": base64.b64encode(png).decode("ascii"),
        }

    @app.post("/api/sessions/{session_id}/ratings", status_code=201)
    def submit(session_id: str, req: RatingRequest):
        if not 0 <= req.score <= 4:
            raise InvalidInputError(f"score must be in 0..4, got {req.score}")
        bad = [f for f in req.flags if f not in FLAGS]
        if bad:
            raise InvalidInputError(f"unknown flags {bad}")
        store.submit_score(session_id, req.item_id, req.score, req.flags)
        session = store.get(session_id)
        return {"rated": session.rated, "total": session.total, "complete": session.complete}

    @app.get("/api/sessions/{session_id}/report")
    def session_report(session_id: str):
        summaries = store.report([session_id])
        return {"methods": {name: vars(s) for name, s in summaries.items()}}

    @app.get("/api/report")
    def pooled_report():
        summaries = store.report()
        return {"methods": {name: vars(s) for name, s in summaries.items()}}

    return app


def serve(bundle_dir, records_path, host="127.0.0.1", port=8008, ui_dir=None):
    """Run the rating service under uvicorn (blocking)."""
    import uvicorn

    store = SessionStore(bundle_dir, records_path)
    app = create_app(store)
    if ui_dir and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")
    uvicorn.run(app, host=host, port=port, log_level="warning")
