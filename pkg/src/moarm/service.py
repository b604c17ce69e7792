"""HTTP/JSON service exposing live acquisition sessions.

Endpoints (see docs/api.md for the field reference):

* ``POST /models``                          load a checkpoint
* ``POST /sessions``                        create a session for a model
* ``GET  /sessions/{id}/suggestions``       ranked candidates (``?top_n=``)
* ``POST /sessions/{id}/observations``      submit one observed value
* ``GET  /sessions/{id}/prediction``        predictive summary + history
* ``DELETE /sessions/{id}``                 drop the session

Sessions are in-memory with idle expiry.  Within a session requests are
serialized by a per-session lock; distinct sessions never share state, and
model parameters are read-only, so concurrent sessions do not block each
other.  All sampling is keyed by a seed derived from the session id: a
repeated request without new observations returns the cached payload
bit-for-bit, and replaying an observation sequence reproduces the same
suggestions and predictions.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
import uuid
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .acquisition import BinningSpec, draw_joint_samples, predict_target, rank_candidates
from .checkpoint import ModelBundle, load_checkpoint

IDLE_EXPIRY_SECONDS = 3600.0


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


@dataclass
class Session:
    session_id: str
    model_id: str
    seed: int
    observed: dict[int, object] = field(default_factory=dict)
    history: list[dict] = field(default_factory=list)
    cached_samples: object = None  # conditional sample batch for current state
    cached_suggestions: list[dict] | None = None
    prediction: dict | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)
    last_used: float = field(default_factory=time.monotonic)


def _session_seed(session_id: str) -> int:
    return int.from_bytes(hashlib.sha256(session_id.encode()).digest()[:8], "big") >> 1


class AcquisitionService:
    """State and operations behind the HTTP handler; usable directly in tests."""

    def __init__(self, n_samples: int = 100, bins: int = 5, snapshot_dir: str | None = None):
        self.n_samples = n_samples
        self.binning = BinningSpec(bins)
        self.snapshot_dir = snapshot_dir
        self.models: dict[str, ModelBundle] = {}
        self.sessions: dict[str, Session] = {}
        self._registry_lock = threading.Lock()

    # -- models ------------------------------------------------------------

    def load_model(self, checkpoint_path: str) -> dict:
        try:
            bundle = load_checkpoint(checkpoint_path)
        except (OSError, ValueError) as e:
            raise ApiError(404, "unknown_checkpoint", f"cannot load checkpoint: {e}") from None
        model_id = f"m-{bundle.schema_hash[:12]}"
        with self._registry_lock:
            self.models[model_id] = bundle
        return {
            "model_id": model_id,
            "schema_hash": bundle.schema_hash,
            "schema": bundle.schema.to_dict(),
        }

    def register_model(self, bundle: ModelBundle) -> str:
        model_id = f"m-{bundle.schema_hash[:12]}"
        with self._registry_lock:
            self.models[model_id] = bundle
        return model_id

    # -- sessions ----------------------------------------------------------

    def create_session(self, model_id: str, seed: int | None = None) -> dict:
        bundle = self._model(model_id)
        session_id = uuid.uuid4().hex
        session = Session(session_id, model_id, seed if seed is not None else _session_seed(session_id))
        with self._registry_lock:
            self.sessions[session_id] = session
        with session.lock:
            self._refresh_state(session, bundle)
            return {
                "session_id": session_id,
                "model_id": model_id,
                "prediction": session.prediction,
                "features": self._feature_table(bundle, session),
            }

    def suggestions(self, session_id: str, top_n: int | None = None) -> dict:
        session = self._session(session_id)
        bundle = self._model(session.model_id)
        with session.lock:
            session.last_used = time.monotonic()
            if session.cached_suggestions is None:
                target = bundle.schema.target_index
                candidates = [
                    i for i in range(bundle.schema.n_features)
                    if i != target and i not in session.observed
                ]
                if not candidates:
                    raise ApiError(409, "no_candidates", "every non-target feature is observed")
                ranking = rank_candidates(
                    bundle,
                    session.observed,
                    self.n_samples,
                    self.binning,
                    samples=session.cached_samples,
                )
                session.cached_suggestions = [
                    {"feature": bundle.schema.specs[e.feature].name, "mi": e.value}
                    for e in ranking
                ]
            items = session.cached_suggestions
            if top_n is not None:
                items = items[: max(top_n, 0)]
            return {"session_id": session_id, "suggestions": items}

    def observe(self, session_id: str, feature_name: str, value) -> dict:
        session = self._session(session_id)
        bundle = self._model(session.model_id)
        with session.lock:
            session.last_used = time.monotonic()
            feat = self._feature_index(bundle, feature_name)
            if feat == bundle.schema.target_index:
                raise ApiError(400, "target_feature", "the target cannot be observed")
            if feat in session.observed:
                raise ApiError(409, "already_observed", f"feature {feature_name!r} already observed")
            mi = None
            if session.cached_suggestions:
                for item in session.cached_suggestions:
                    if item["feature"] == feature_name:
                        mi = item["mi"]
                        break
            try:
                probe = dict(session.observed)
                probe[feat] = value
                # raises on type/range problems before any state changes
                from .acquisition import encode_observed

                encode_observed(bundle, probe)
            except (TypeError, ValueError) as e:
                raise ApiError(400, "invalid_value", str(e)) from None
            session.observed[feat] = value
            session.cached_samples = None
            session.cached_suggestions = None
            self._refresh_state(session, bundle)
            session.history.append(
                {
                    "step": len(session.history) + 1,
                    "feature": feature_name,
                    "mi": mi,
                    "value": value,
                    "prediction": session.prediction,
                }
            )
            self._snapshot(session)
            return {"session_id": session_id, "prediction": session.prediction}

    def prediction(self, session_id: str) -> dict:
        session = self._session(session_id)
        bundle = self._model(session.model_id)
        with session.lock:
            session.last_used = time.monotonic()
            # the feature table rides along so a client can rebuild its whole
            # view from the session id alone
            return {
                "session_id": session_id,
                "prediction": session.prediction,
                "history": session.history,
                "features": self._feature_table(bundle, session),
            }

    def delete_session(self, session_id: str) -> dict:
        with self._registry_lock:
            if session_id not in self.sessions:
                raise ApiError(404, "unknown_session", f"no session {session_id!r}")
            del self.sessions[session_id]
        return {"session_id": session_id, "deleted": True}

    # -- internals ----------------------------------------------------------

    def _refresh_state(self, session: Session, bundle: ModelBundle) -> None:
        session.cached_samples = draw_joint_samples(
            bundle,
            session.observed,
            self.n_samples,
            session.seed,
            salt=len(session.observed),
        )
        summary = predict_target(bundle, session.observed, samples=session.cached_samples)
        session.prediction = summary.to_dict()

    def _feature_table(self, bundle: ModelBundle, session: Session) -> list[dict]:
        return [
            {
                "name": s.name,
                "kind": s.kind,
                "cardinality": s.cardinality,
                "categories": list(s.categories),
                "is_target": s.is_target,
                "observed": i in session.observed,
            }
            for i, s in enumerate(bundle.schema.specs)
        ]

    def _feature_index(self, bundle: ModelBundle, name: str) -> int:
        for i, s in enumerate(bundle.schema.specs):
            if s.name == name:
                return i
        raise ApiError(404, "unknown_feature", f"no feature named {name!r}")

    def _model(self, model_id: str) -> ModelBundle:
        with self._registry_lock:
            if model_id not in self.models:
                raise ApiError(404, "unknown_model", f"no model {model_id!r}")
            return self.models[model_id]

    def _session(self, session_id: str) -> Session:
        with self._registry_lock:
            self._expire_idle()
            if session_id not in self.sessions:
                raise ApiError(404, "unknown_session", f"no session {session_id!r}")
            return self.sessions[session_id]

    def _expire_idle(self) -> None:
        now = time.monotonic()
        stale = [sid for sid, s in self.sessions.items() if now - s.last_used > IDLE_EXPIRY_SECONDS]
        for sid in stale:
            del self.sessions[sid]

    def _snapshot(self, session: Session) -> None:
        if not self.snapshot_dir:
            return
        os.makedirs(self.snapshot_dir, exist_ok=True)
        path = os.path.join(self.snapshot_dir, f"{session.session_id}.json")
        blob = {
            "session_id": session.session_id,
            "model_id": session.model_id,
            "observed": {str(k): v for k, v in session.observed.items()},
            "history": session.history,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(blob, fh, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# HTTP plumbing


def make_handler(service: AcquisitionService, static_dir: str | None = None):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # quiet by default
            pass

        def _reply(self, status: int, payload: dict) -> None:
            body = json.dumps(payload).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)

        def _body(self) -> dict:
            length = int(self.headers.get("Content-Length") or 0)
            if length == 0:
                return {}
            try:
                return json.loads(self.rfile.read(length).decode())
            except json.JSONDecodeError:
                raise ApiError(400, "bad_request", "request body is not valid JSON") from None

        def _dispatch(self, method: str) -> None:
            path, _, query = self.path.partition("?")
            try:
                if method == "POST" and path == "/models":
                    body = self._body()
                    if "checkpoint" not in body:
                        raise ApiError(400, "bad_request", "missing field 'checkpoint'")
                    self._reply(200, service.load_model(body["checkpoint"]))
                elif method == "POST" and path == "/sessions":
                    body = self._body()
                    if "model_id" not in body:
                        raise ApiError(400, "bad_request", "missing field 'model_id'")
                    self._reply(200, service.create_session(body["model_id"], body.get("seed")))
                    return
                elif (m := re.match(r"^/sessions/([0-9a-f]+)/suggestions$", path)) and method == "GET":
                    top_n = None
                    qm = re.search(r"(?:^|&)top_n=(\d+)", query)
                    if qm:
                        top_n = int(qm.group(1))
                    self._reply(200, service.suggestions(m.group(1), top_n))
                elif (m := re.match(r"^/sessions/([0-9a-f]+)/observations$", path)) and method == "POST":
                    body = self._body()
                    for key in ("feature", "value"):
                        if key not in body:
                            raise ApiError(400, "bad_request", f"missing field {key!r}")
                    self._reply(200, service.observe(m.group(1), body["feature"], body["value"]))
                elif (m := re.match(r"^/sessions/([0-9a-f]+)/prediction$", path)) and method == "GET":
                    self._reply(200, service.prediction(m.group(1)))
                elif (m := re.match(r"^/sessions/([0-9a-f]+)$", path)) and method == "DELETE":
                    self._reply(200, service.delete_session(m.group(1)))
                elif method == "GET" and static_dir:
                    self._static(path)
                else:
                    raise ApiError(404, "not_found", f"no route for {method} {path}")
            except ApiError as e:
                self._reply(e.status, {"code": e.code, "message": e.message})

        def _static(self, path: str) -> None:
            rel = "index.html" if path in ("", "/") else path.lstrip("/")
            full = os.path.normpath(os.path.join(static_dir, rel))
            if not full.startswith(os.path.abspath(static_dir)) or not os.path.isfile(full):
                raise ApiError(404, "not_found", f"no route for GET {path}")
            ctype = {
                ".html": "text/html",
                ".js": "text/javascript",
                ".css": "text/css",
                ".map": "application/json",
            }.get(os.path.splitext(full)[1], "application/octet-stream")
            with open(full, "rb") as fh:
                body = fh.read()
            self.send_response(200)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            self._dispatch("GET")

        def do_POST(self):
            self._dispatch("POST")

        def do_DELETE(self):
            self._dispatch("DELETE")

    return Handler


def serve(
    service: AcquisitionService,
    port: int,
    host: str = "127.0.0.1",
    static_dir: str | None = None,
) -> ThreadingHTTPServer:
    if static_dir:
        static_dir = os.path.abspath(static_dir)
    server = ThreadingHTTPServer((host, port), make_handler(service, static_dir))
    return server
