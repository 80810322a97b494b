"""HTTP service exposing the pipeline for interactive chat sessions.

Endpoints (JSON over HTTP/1.1):
    POST /v1/sessions                  -> {"api": 1, "session_id": str}
    POST /v1/sessions/{id}/messages    -> recommendations + stage trace
    GET  /healthz
"""

from __future__ import annotations

import datetime
import threading
import time
import uuid
from dataclasses import dataclass, field, replace
from typing import Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from . import entity_link, pipeline
from .cf_model import SimilarityModel
from .config import AppConfig
from .corpus import (
    Dialogue,
    ItemDatabase,
    Mention,
    Speaker,
    Split,
    Utterance,
)
from .entity_link import TitleIndex
from .errors import EmptyRecommendation, ReplayMiss, TransportError
from .llm_gateway import Gateway

API_VERSION = 1


@dataclass
class ChatSession:
    session_id: str
    turns: list[Utterance] = field(default_factory=list)
    last_trace: Optional[pipeline.PipelineTrace] = None
    last_active: float = field(default_factory=time.monotonic)


@dataclass
class Runtime:
    db: ItemDatabase
    index: TitleIndex
    model: SimilarityModel
    gateway: Gateway
    cfg: AppConfig

    def __post_init__(self):
        self.sessions: dict[str, ChatSession] = {}
        self.lock = threading.Lock()

    def prune_sessions(self) -> None:
        cutoff = time.monotonic() - self.cfg.session_timeout_s
        with self.lock:
            stale = [
                sid for sid, s in self.sessions.items() if s.last_active < cutoff
            ]
            for sid in stale:
                del self.sessions[sid]


class MessageBody(BaseModel):
    text: str
    k: Optional[int] = None


def build_app(runtime: Runtime) -> FastAPI:
    app = FastAPI(title="crag")

    @app.get("/healthz")
    def healthz():
        return {"api": API_VERSION, "status": "ok"}

    @app.post("/v1/sessions")
    def create_session():
        runtime.prune_sessions()
        sid = uuid.uuid4().hex
        with runtime.lock:
            runtime.sessions[sid] = ChatSession(sid)
        return {"api": API_VERSION, "session_id": sid}

    @app.post("/v1/sessions/{sid}/messages")
    def post_message(sid: str, body: MessageBody, trace: bool = True):
        with runtime.lock:
            session = runtime.sessions.get(sid)
        if session is None:
            raise HTTPException(status_code=404, detail="unknown session")
        if not body.text.strip():
            raise HTTPException(status_code=400, detail="empty utterance")

        pipe_cfg = runtime.cfg.pipeline
        if body.k is not None:
            if body.k < 0:
                raise HTTPException(status_code=400, detail="k must be >= 0")
            pipe_cfg = replace(pipe_cfg, k=body.k)

        try:
            linked = entity_link.extract_and_link(
                body.text, runtime.index, runtime.gateway,
                runtime.cfg.char_threshold,
            )
            mentions = tuple(
                Mention(runtime.db.title(m.item_id), m.attitude)
                for m in linked.mentions
            )
            session.turns.append(Utterance(Speaker.USER, body.text, mentions))
            prefix = Dialogue(
                id=sid,
                turns=tuple(session.turns),
                start_date=datetime.date.today(),
                split=Split.TEST,
            )
            result = pipeline.run(
                prefix, pipe_cfg, runtime.model, runtime.db,
                runtime.index, runtime.gateway, runtime.cfg.policy,
            )
        except (TransportError, ReplayMiss) as exc:
            raise HTTPException(status_code=503, detail=str(exc))
        except EmptyRecommendation as exc:
            raise HTTPException(status_code=502, detail=str(exc))

        top = result.final_recs[:5]
        titles = [runtime.db.catalog_title(c) for c in top]
        session.turns.append(Utterance(
            Speaker.SYSTEM,
            "Recommendations: " + "; ".join(titles),
            tuple(Mention(t, 0) for t in titles),
        ))
        session.last_trace = result
        session.last_active = time.monotonic()

        response = {
            "api": API_VERSION,
            "session_id": sid,
            "recommendations": [
                runtime.db.catalog_title(c) for c in result.final_recs
            ],
        }
        if trace:
            response["trace"] = pipeline.trace_to_dict(result, runtime.db)
        return response

    return app
