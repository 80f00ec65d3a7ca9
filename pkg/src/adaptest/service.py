"""HTTP session service for live adaptive test administration.

Single source of truth is an append-only JSON-lines event log per session,
fsync'd before any answer is acknowledged; restarting the service replays the
logs through the deterministic engine and loses nothing. Test takers only
ever see the public item view (stimulus, question, options, position) — never
parameters, correctness keys, scored/unscored kind, or feature tags.
"""
from __future__ import annotations

import json
import os
import secrets
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from fastapi import Body, FastAPI, Header, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.staticfiles import StaticFiles

from . import engine
from .bank import ItemBank, load_bank

__all__ = ["ServiceConfig", "SessionStore", "create_app", "app_from_config"]

ADMIN_TOKEN_ENV = "CAT_ADMIN_TOKEN"


@dataclass(frozen=True)
class ServiceConfig:
    bank_paths: list[str]
    data_dir: str
    port: int = 8000
    host: str = "127.0.0.1"
    show_result: bool = True
    deployment_seed: int = 0

    @staticmethod
    def from_file(path: str | Path) -> "ServiceConfig":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        return ServiceConfig(
            bank_paths=list(raw["banks"]),
            data_dir=str(raw["data_dir"]),
            port=int(raw.get("port", 8000)),
            host=str(raw.get("host", "127.0.0.1")),
            show_result=bool(raw.get("show_result", True)),
            deployment_seed=int(raw.get("deployment_seed", 0)),
        )


@dataclass
class SessionRecord:
    session_id: str
    bank_id: str
    state: engine.SessionState
    path: Path
    created: float
    updated: float
    persisted_events: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)


class SessionStore:
    """Durable session registry: every event hits disk before the response."""

    def __init__(self, banks: dict[str, ItemBank], data_dir: str | Path,
                 deployment_seed: int = 0):
        self.banks = banks
        self.data_dir = Path(data_dir)
        self.sessions_dir = self.data_dir / "sessions"
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        self.deployment_seed = deployment_seed
        self.records: dict[str, SessionRecord] = {}
        self._registry_lock = threading.Lock()
        self._load_existing()

    def _load_existing(self) -> None:
        for path in sorted(self.sessions_dir.glob("*.jsonl")):
            events = engine.read_transcript(path)
            if not events:
                continue
            started = events[0]
            bank = self.banks.get(started.get("bank_id", ""))
            if bank is None:
                continue
            state = engine.replay_transcript(bank, events)
            mtime = path.stat().st_mtime
            self.records[state.session_id] = SessionRecord(
                session_id=state.session_id,
                bank_id=bank.bank_id,
                state=state,
                path=path,
                created=mtime,
                updated=mtime,
                persisted_events=len(state.events()),
            )
        self._write_index()

    def _write_index(self) -> None:
        index = {
            sid: {
                "bank_id": r.bank_id,
                "status": r.state.status,
                "answered": len(r.state.administered),
                "created": r.created,
                "updated": r.updated,
            }
            for sid, r in self.records.items()
        }
        tmp = self.data_dir / "index.json.tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(index, fh, indent=2, sort_keys=True)
        tmp.replace(self.data_dir / "index.json")

    def _persist(self, record: SessionRecord) -> None:
        events = record.state.events()
        new = events[record.persisted_events :]
        if not new:
            return
        with open(record.path, "a", encoding="utf-8") as fh:
            for event in new:
                fh.write(json.dumps(event, sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        record.persisted_events = len(events)
        record.updated = time.time()
        self._write_index()

    def create(self, bank_id: str, overrides: dict | None = None) -> SessionRecord:
        bank = self.banks.get(bank_id)
        if bank is None:
            raise KeyError(bank_id)
        session_id = secrets.token_urlsafe(16)
        config = engine.default_config(
            bank,
            rng_seed=secrets.randbits(31),
            deployment_seed=self.deployment_seed,
        )
        if overrides:
            allowed = {"scored_length", "rng_seed"}
            unknown = set(overrides) - allowed
            if unknown:
                raise ValueError(f"unknown config overrides: {sorted(unknown)}")
            config = replace(config, **{k: int(v) for k, v in overrides.items()})
        state = engine.start_session(bank, config, session_id=session_id)
        record = SessionRecord(
            session_id=session_id,
            bank_id=bank_id,
            state=state,
            path=self.sessions_dir / f"{session_id}.jsonl",
            created=time.time(),
            updated=time.time(),
        )
        with self._registry_lock:
            self.records[session_id] = record
        with record.lock:
            self._persist(record)
        return record

    def get(self, session_id: str) -> SessionRecord:
        record = self.records.get(session_id)
        if record is None:
            raise KeyError(session_id)
        return record


def _item_view(bank: ItemBank, state: engine.SessionState) -> dict | None:
    if state.pending_item is None:
        return None
    item = bank.item(state.pending_item)
    return {
        "item_id": item.item_id,
        "stimulus": dict(item.stimulus),
        "question": item.question,
        "options": list(item.options),
        "position": state.position,
        "total": state.total_length,
    }


def _progress(state: engine.SessionState) -> dict:
    return {"answered": len(state.administered), "total": state.total_length}


def _answer_response(bank: ItemBank, state: engine.SessionState) -> dict:
    return {
        "status": state.status,
        "next_item": _item_view(bank, state),
        "progress": _progress(state),
    }


def create_app(
    banks: dict[str, ItemBank],
    data_dir: str | Path,
    admin_token: str | None = None,
    show_result: bool = True,
    deployment_seed: int = 0,
) -> FastAPI:
    store = SessionStore(banks, data_dir, deployment_seed=deployment_seed)
    token = admin_token if admin_token is not None else os.environ.get(ADMIN_TOKEN_ENV)
    app = FastAPI(title="adaptest session service")
    # the runner may be hosted on another origin; auth is header-based, no cookies
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.store = store

    def require_admin(header_token: str | None) -> None:
        if not token or header_token != token:
            raise HTTPException(status_code=401, detail="admin token required")

    @app.post("/api/v1/sessions")
    def create_session(payload: dict = Body(...)):
        bank_id = payload.get("bank_id")
        if not isinstance(bank_id, str):
            raise HTTPException(status_code=422, detail="bank_id required")
        try:
            record = store.create(bank_id, payload.get("config_overrides"))
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown bank: {bank_id}")
        except (engine.CoverageError, engine.EngineError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        bank = store.banks[bank_id]
        return {
            "session_id": record.session_id,
            "item": _item_view(bank, record.state),
            "progress": _progress(record.state),
        }

    @app.get("/api/v1/sessions/{session_id}")
    def get_session(session_id: str):
        try:
            record = store.get(session_id)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown session")
        bank = store.banks[record.bank_id]
        return {
            "status": record.state.status,
            "item": _item_view(bank, record.state),
            "progress": _progress(record.state),
        }

    @app.post("/api/v1/sessions/{session_id}/answers")
    def submit_answer(session_id: str, payload: dict = Body(...)):
        try:
            record = store.get(session_id)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown session")
        item_id = payload.get("item_id")
        selected_index = payload.get("selected_index")
        if not isinstance(item_id, str) or not isinstance(selected_index, int):
            raise HTTPException(
                status_code=422, detail="item_id and selected_index required"
            )
        bank = store.banks[record.bank_id]
        with record.lock:
            state = record.state
            last = state.administered[-1] if state.administered else None
            is_duplicate = (
                last is not None
                and last[0] == item_id
                and last[1] == selected_index
            )
            if state.status == "completed":
                if is_duplicate:
                    return _answer_response(bank, state)
                raise HTTPException(status_code=409, detail="session completed")
            if item_id != state.pending_item:
                if is_duplicate:
                    # client retry of the already-recorded answer
                    return _answer_response(bank, state)
                raise HTTPException(status_code=409, detail="out-of-order answer")
            item = bank.item(item_id)
            if not 0 <= selected_index < len(item.options):
                raise HTTPException(status_code=422, detail="selected_index out of range")
            engine.submit_answer(state, bank, item_id, selected_index)
            response = _answer_response(bank, state)
            store._persist(record)
            return response

    @app.get("/api/v1/sessions/{session_id}/result")
    def get_result(session_id: str):
        try:
            record = store.get(session_id)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown session")
        state = record.state
        if state.status != "completed":
            raise HTTPException(status_code=409, detail="session not completed")
        bank = store.banks[record.bank_id]
        coverage: dict[str, dict] = {}
        for dim in state.config.covering_dimensions:
            administered_values = sorted(
                {
                    bank.item(iid).features[dim]
                    for iid, _, _, scored in state.administered
                    if scored and dim in bank.item(iid).features
                }
            )
            coverage[dim] = {
                "covered": administered_values,
                "total": len(bank.vocabularies[dim]),
            }
        body = {
            "administered": len(state.administered),
            "coverage": coverage,
        }
        if show_result:
            score = engine.final_score(state)
            body.update(
                {
                    "theta_mean": score.theta_mean,
                    "theta_se": score.theta_se,
                    "raw_correctness": score.raw_correctness,
                }
            )
        return body

    @app.get("/api/v1/banks")
    def list_banks(x_admin_token: str | None = Header(default=None)):
        require_admin(x_admin_token)
        return [
            {
                "bank_id": b.bank_id,
                "test_family": b.test_family,
                "n_items": len(b.items),
                "n_scored": len(b.scored_items()),
            }
            for b in store.banks.values()
        ]

    @app.get("/api/v1/admin/sessions")
    def list_sessions(
        bank_id: str | None = None,
        x_admin_token: str | None = Header(default=None),
    ):
        require_admin(x_admin_token)
        return [
            {
                "session_id": r.session_id,
                "bank_id": r.bank_id,
                "status": r.state.status,
                "answered": len(r.state.administered),
            }
            for r in store.records.values()
            if bank_id is None or r.bank_id == bank_id
        ]

    @app.get("/api/v1/admin/sessions/{session_id}/transcript")
    def get_transcript(
        session_id: str, x_admin_token: str | None = Header(default=None)
    ):
        require_admin(x_admin_token)
        try:
            record = store.get(session_id)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown session")
        return {"events": record.state.events()}

    # the built web runner, when present, is hosted from the package
    static_dir = Path(__file__).parent / "static"
    if (static_dir / "index.html").exists():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app


def app_from_config(config: ServiceConfig, admin_token: str | None = None) -> FastAPI:
    banks = {}
    for path in config.bank_paths:
        bank = load_bank(path)
        banks[bank.bank_id] = bank
    return create_app(
        banks,
        config.data_dir,
        admin_token=admin_token,
        show_result=config.show_result,
        deployment_seed=config.deployment_seed,
    )
