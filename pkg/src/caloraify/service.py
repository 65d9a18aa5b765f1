"""HTTP service wiring the pipeline for the chat UI and other clients.

Handlers share the KB and index read-only; sessions live in a locked LRU
store and each session's turns are processed under a per-session lock so
concurrent requests can never interleave a conversation.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import threading
from collections import OrderedDict
from contextlib import asynccontextmanager
from dataclasses import dataclass, replace

from fastapi import FastAPI, File, Form, Request, UploadFile
from fastapi.responses import JSONResponse

from . import kb as kb_module
from .calories import CalorieReport, IngredientEstimate
from .ingredients import ParsedIngredient
from .retrieval import RetrievedContext, VectorIndex, build_index
from .vlm import (
    AnalysisResult,
    ChatSession,
    HttpBackend,
    ImageRef,
    PipelineConfig,
    StubBackend,
    TransportError,
    analyze_image,
    chat_turn,
)

access_log = logging.getLogger("caloraify.access")

ALLOWED_MEDIA_TYPES = {"image/jpeg", "image/png", "image/webp"}

ENV_PREFIX = "CALORAIFY_"


@dataclass(frozen=True)
class ServiceConfig:
    port: int = 8080
    kb_path: str | None = None
    vlm_mode: str = "stub"
    vlm_endpoint: str | None = None
    stub_fixture_path: str | None = None
    retrieval_k: int = 3
    min_score: float = 0.35
    lambda_rouge: float = 2.5
    lambda_bleu: float = 1.5
    request_timeout_ms: int = 30_000
    max_image_bytes: int = 8 * 1024 * 1024
    session_capacity: int = 1024
    vlm_retries: int = 2

    def __post_init__(self) -> None:
        if self.max_image_bytes <= 0:
            raise ValueError("max_image_bytes must be positive")
        if self.retrieval_k < 1:
            raise ValueError("retrieval_k must be >= 1")
        if self.vlm_mode not in ("stub", "http"):
            raise ValueError(f"vlm_mode must be stub or http, got {self.vlm_mode!r}")
        if self.vlm_mode == "http" and not self.vlm_endpoint:
            raise ValueError("vlm_mode=http requires vlm_endpoint")

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(retrieval_k=self.retrieval_k, min_score=self.min_score)


_ENV_FIELDS = {
    "PORT": ("port", int),
    "KB": ("kb_path", str),
    "VLM_MODE": ("vlm_mode", str),
    "VLM_ENDPOINT": ("vlm_endpoint", str),
    "STUB_FIXTURES": ("stub_fixture_path", str),
    "RETRIEVAL_K": ("retrieval_k", int),
    "MIN_SCORE": ("min_score", float),
    "LAMBDA_ROUGE": ("lambda_rouge", float),
    "LAMBDA_BLEU": ("lambda_bleu", float),
    "TIMEOUT_MS": ("request_timeout_ms", int),
    "MAX_IMAGE_BYTES": ("max_image_bytes", int),
    "SESSION_CAPACITY": ("session_capacity", int),
    "VLM_RETRIES": ("vlm_retries", int),
}


def config_from_env(base: ServiceConfig = ServiceConfig(), environ=None) -> ServiceConfig:
    """Overlay CALORAIFY_* environment variables onto a base config."""
    environ = os.environ if environ is None else environ
    overrides = {}
    for suffix, (field_name, cast) in _ENV_FIELDS.items():
        raw = environ.get(ENV_PREFIX + suffix)
        if raw is not None:
            overrides[field_name] = cast(raw)
    return replace(base, **overrides) if overrides else base


class SessionStore:
    """Thread-safe LRU of chat sessions; evicts only when over capacity."""

    def __init__(self, capacity: int = 1024):
        self.capacity = capacity
        self._sessions: OrderedDict[str, ChatSession] = OrderedDict()
        self._locks: dict[str, threading.Lock] = {}
        self._lock = threading.Lock()
        self._created = 0

    def __len__(self) -> int:
        with self._lock:
            return len(self._sessions)

    def new_session_id(self, seed_text: str) -> str:
        with self._lock:
            self._created += 1
            material = f"{self._created}:{seed_text}".encode("utf-8")
        return hashlib.sha256(material).hexdigest()[:32]

    def put(self, session: ChatSession) -> None:
        with self._lock:
            self._sessions[session.session_id] = session
            self._sessions.move_to_end(session.session_id)
            self._locks.setdefault(session.session_id, threading.Lock())
            while len(self._sessions) > self.capacity:
                evicted_id, _ = self._sessions.popitem(last=False)
                self._locks.pop(evicted_id, None)

    def get(self, session_id: str) -> ChatSession | None:
        with self._lock:
            session = self._sessions.get(session_id)
            if session is not None:
                self._sessions.move_to_end(session_id)
            return session

    def lock_for(self, session_id: str) -> threading.Lock:
        with self._lock:
            return self._locks.setdefault(session_id, threading.Lock())


def parsed_to_dict(item: ParsedIngredient) -> dict:
    return {
        "name": item.name,
        "quantity": item.quantity,
        "unit": item.unit.name,
        "unit_kind": item.unit.kind,
        "raw_line": item.raw_line,
    }


def estimate_to_dict(est: IngredientEstimate) -> dict:
    return {
        "ingredient": parsed_to_dict(est.ingredient),
        "matched_food_id": est.matched_food_id,
        "grams": est.grams,
        "kcal": est.kcal,
        "match_score": est.match_score,
        "flags": sorted(est.flags),
    }


def context_to_dict(context: RetrievedContext) -> dict:
    return {
        "query_text": context.query_text,
        "hits": [
            {"doc_id": hit.doc_id, "score": hit.score, "text": hit.text}
            for hit in context.hits
        ],
        "k_requested": context.k_requested,
    }


def report_to_dict(report: CalorieReport) -> dict:
    return {
        "estimates": [estimate_to_dict(e) for e in report.estimates],
        "total_kcal": report.total_kcal,
        "generated_answer": report.generated_answer,
    }


def analysis_to_dict(analysis: AnalysisResult) -> dict:
    return {
        "stage1_text": analysis.stage1_text,
        "parsed": [parsed_to_dict(p) for p in analysis.parsed],
        "report": report_to_dict(analysis.report),
        "final_answer": analysis.final_answer,
        "evidence": [context_to_dict(c) for c in analysis.report.evidence],
    }


def make_backend(config: ServiceConfig):
    if config.vlm_mode == "http":
        return HttpBackend(
            config.vlm_endpoint,
            timeout_ms=config.request_timeout_ms,
            retries=config.vlm_retries,
        )
    if config.stub_fixture_path:
        return StubBackend.from_file(config.stub_fixture_path)
    return StubBackend()


def _error(status: int, message: str, **extra) -> JSONResponse:
    body = {"error": message}
    body.update(extra)
    return JSONResponse(status_code=status, content=body)


def create_app(
    config: ServiceConfig,
    kb=None,
    index: VectorIndex | None = None,
    backend=None,
) -> FastAPI:
    """Build the service; kb/index/backend may be injected (tests) or loaded
    from config at startup."""
    state = {
        "config": config,
        "kb": kb,
        "index": index,
        "backend": backend if backend is not None else make_backend(config),
        "sessions": SessionStore(config.session_capacity),
    }

    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        if state["kb"] is None and config.kb_path:
            state["kb"] = kb_module.load_snapshot_path(config.kb_path)
        if state["index"] is None and state["kb"] is not None:
            state["index"] = build_index(state["kb"])
        yield

    app = FastAPI(title="caloraify", docs_url=None, redoc_url=None, lifespan=lifespan)

    @app.middleware("http")
    async def log_requests(request: Request, call_next):
        response = await call_next(request)
        access_log.info(
            json.dumps(
                {
                    "method": request.method,
                    "path": request.url.path,
                    "status": response.status_code,
                },
                sort_keys=True,
            )
        )
        return response

    def ready() -> bool:
        return state["kb"] is not None and state["index"] is not None

    @app.get("/healthz")
    def healthz():
        if not ready():
            return JSONResponse(status_code=503, content={"status": "loading"})
        return {
            "status": "ok",
            "kb_digest": state["kb"].source_digest,
            "vlm_mode": config.vlm_mode,
            "max_image_bytes": config.max_image_bytes,
        }

    @app.get("/v1/kb/search")
    def kb_search(q: str | None = None, k: int | None = None):
        if q is None or q == "":
            return _error(400, "missing query parameter q")
        if not ready():
            return _error(500, "kb not loaded")
        k_value = k if k is not None else config.retrieval_k
        if k_value < 1:
            return _error(400, "k must be >= 1")
        context = state["index"].search(q, k_value)
        return context_to_dict(context)

    @app.post("/v1/analyze")
    async def analyze(
        image: UploadFile = File(...),
        instruction: str | None = Form(default=None),
    ):
        if not ready():
            return _error(503, "kb not loaded")
        media_type = image.content_type or ""
        if media_type not in ALLOWED_MEDIA_TYPES:
            return _error(415, f"unsupported media type {media_type!r}")
        data = await image.read()
        if len(data) > config.max_image_bytes:
            return _error(413, f"image exceeds {config.max_image_bytes} bytes")
        pipeline_config = config.pipeline_config()
        if instruction:
            pipeline_config = replace(pipeline_config, stage1_question=instruction)
        try:
            analysis = analyze_image(
                ImageRef(data=data, media_type=media_type),
                state["backend"],
                state["index"],
                state["kb"],
                pipeline_config,
            )
        except TransportError as exc:
            return _error(502, str(exc), retries=exc.retries)
        body = analysis_to_dict(analysis)
        if not analysis.parsed:
            return JSONResponse(status_code=422, content=body)
        return body

    @app.post("/v1/chat")
    async def chat(payload: dict):
        text = (payload.get("text") or "").strip()
        image_b64 = payload.get("image_b64")
        if not text and not image_b64:
            return _error(400, "empty turn: provide text or image_b64")
        if not ready():
            return _error(503, "kb not loaded")
        image = None
        if image_b64:
            try:
                data = base64.b64decode(image_b64, validate=True)
            except Exception:
                return _error(400, "image_b64 is not valid base64")
            if len(data) > config.max_image_bytes:
                return _error(413, f"image exceeds {config.max_image_bytes} bytes")
            image = ImageRef(data=data, media_type=payload.get("media_type", "image/png"))

        sessions: SessionStore = state["sessions"]
        session_id = payload.get("session_id")
        if session_id is not None:
            session = sessions.get(session_id)
            if session is None:
                return _error(404, f"unknown session {session_id!r}")
        else:
            session_id = sessions.new_session_id(
                f"{text}:{image.digest if image else ''}"
            )
            session = ChatSession(session_id=session_id)
            sessions.put(session)

        with sessions.lock_for(session_id):
            try:
                assistant_text, session = chat_turn(
                    session,
                    text,
                    image,
                    state["backend"],
                    state["index"],
                    state["kb"],
                    config.pipeline_config(),
                )
            except TransportError as exc:
                return _error(502, str(exc), retries=exc.retries)
            sessions.put(session)
        return {"session_id": session_id, "assistant_text": assistant_text}

    return app


def run(config: ServiceConfig) -> None:
    """Serve with uvicorn; blocks until shutdown."""
    import uvicorn

    if not access_log.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter("%(message)s"))
        access_log.addHandler(handler)
        access_log.setLevel(logging.INFO)

    app = create_app(config)
    uvicorn.run(app, host="127.0.0.1", port=config.port, log_level="warning")
