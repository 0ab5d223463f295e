"""HTTP service exposing the analysis pipeline to interactive clients.

Sessions hold an immutable panel snapshot plus an insert-only result cache
keyed by content hash, so identical requests are served byte-identically and
concurrent readers never observe partial state.  Bootstrap-backed event
studies run as background jobs with a polling endpoint; everything else is
synchronous.
"""

from __future__ import annotations

import io as _io
import json
import threading
import uuid
from dataclasses import dataclass, field

import pandas as pd
from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from . import pipelines
from .balance import InfeasibleError
from .io import config_hash, parse_spec
from .panel import Panel, PanelError, load_panel

__all__ = ["create_app"]


@dataclass
class Session:
    id: str
    panel: Panel
    cache: dict = field(default_factory=dict)
    jobs: dict = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)


def _json_bytes(payload: dict) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()


def create_app() -> FastAPI:
    app = FastAPI(title="eventlab")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    sessions: dict[str, Session] = {}

    @app.exception_handler(PanelError)
    async def _panel_error(request: Request, exc: PanelError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(InfeasibleError)
    async def _infeasible(request: Request, exc: InfeasibleError):
        diag = {k: v for k, v in exc.diagnosis.items() if k != "residuals"}
        return JSONResponse(status_code=422,
                            content={"error": str(exc), "diagnosis": diag})

    def session_of(sid: str) -> Session:
        if sid not in sessions:
            raise _NotFound(sid)
        return sessions[sid]

    class _NotFound(Exception):
        def __init__(self, sid):
            self.sid = sid

    @app.exception_handler(_NotFound)
    async def _not_found(request: Request, exc: _NotFound):
        return JSONResponse(status_code=404,
                            content={"error": f"unknown session {exc.sid}"})

    @app.get("/healthz")
    async def healthz():
        return Response(content="ok", media_type="text/plain")

    @app.post("/sessions")
    async def create_session(request: Request):
        body = await request.json()
        if "csv" not in body:
            raise PanelError('session upload needs a "csv" field')
        df = pd.read_csv(_io.StringIO(body["csv"]))
        panel = load_panel(df, schema=body.get("schema"),
                           allow_missing=bool(body.get("allow_missing", False)))
        sid = uuid.uuid4().hex[:12]
        sessions[sid] = Session(id=sid, panel=panel)
        return {"id": sid, **pipelines.run_validate(panel)}

    @app.get("/sessions/{sid}/panel")
    async def get_panel(sid: str):
        s = session_of(sid)
        frame = s.panel.to_frame()
        return _cached(s, "panel", {}, lambda: {
            "summary": pipelines.run_validate(s.panel),
            "rows": frame.to_dict(orient="records"),
        })

    def _cached(s: Session, endpoint: str, body: dict, compute) -> Response:
        key = config_hash({"endpoint": endpoint, "body": body})
        with s.lock:
            hit = s.cache.get(key)
        if hit is None:
            payload = compute()
            hit = _json_bytes(payload)
            with s.lock:
                hit = s.cache.setdefault(key, hit)
        return Response(content=hit, media_type="application/json",
                        headers={"ETag": f'"{key}"'})

    def _specs(body: dict):
        return parse_spec(body)

    @app.post("/sessions/{sid}/classify")
    async def classify(sid: str, request: Request):
        s = session_of(sid)
        body = await request.json()
        estimand, assumptions = _specs(body)
        return _cached(s, "classify", body,
                       lambda: pipelines.run_classify(s.panel, estimand, assumptions))

    @app.post("/sessions/{sid}/estimate")
    async def estimate(sid: str, request: Request):
        s = session_of(sid)
        body = await request.json()
        estimand, assumptions = _specs(body)
        options = body.get("estimator", {})
        return _cached(s, "estimate", body,
                       lambda: pipelines.run_estimate(s.panel, estimand, assumptions, options))

    @app.post("/sessions/{sid}/twfe")
    async def twfe(sid: str, request: Request):
        s = session_of(sid)
        body = await request.json()
        return _cached(s, "twfe", body,
                       lambda: pipelines.run_twfe(s.panel, body.get("estimator", {})))

    @app.post("/sessions/{sid}/diagnostics")
    async def diagnostics(sid: str, request: Request):
        s = session_of(sid)
        body = await request.json()
        estimand, assumptions = _specs(body)
        return _cached(s, "diagnostics", body, lambda: pipelines.run_diagnose(
            s.panel, estimand, assumptions,
            weights=body.get("weights"), options=body.get("estimator", {})))

    @app.post("/sessions/{sid}/event-study")
    async def event_study(sid: str, request: Request):
        s = session_of(sid)
        body = await request.json()
        estimand, assumptions = _specs(body)
        options = body.get("estimator", {})
        if options.get("bootstrap"):
            jid = uuid.uuid4().hex[:12]
            s.jobs[jid] = {"status": "running"}

            def work():
                try:
                    payload = pipelines.run_event_study(s.panel, estimand,
                                                        assumptions, options)
                    s.jobs[jid] = {"status": "done", "result": payload}
                except (PanelError, InfeasibleError) as exc:
                    s.jobs[jid] = {"status": "failed", "error": str(exc)}

            threading.Thread(target=work, daemon=True).start()
            return JSONResponse(status_code=202, content={"job": jid})
        return _cached(s, "event-study", body, lambda: pipelines.run_event_study(
            s.panel, estimand, assumptions, options))

    @app.get("/sessions/{sid}/jobs/{jid}")
    async def job_status(sid: str, jid: str):
        s = session_of(sid)
        job = s.jobs.get(jid)
        if job is None:
            return JSONResponse(status_code=404, content={"error": f"unknown job {jid}"})
        if job["status"] == "running":
            return JSONResponse(status_code=409, content={"status": "running"})
        if job["status"] == "failed":
            return JSONResponse(status_code=422, content=job)
        return job

    return app
