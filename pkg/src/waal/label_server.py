"""HTTP facade turning the interactive oracle into a wire protocol.

One session at a time: POST /session launches the experiment on a worker
thread, GET /session/{id}/batch is the console's poll target, POST
/session/{id}/labels feeds the blocked oracle, GET /session/{id}/metrics
returns the completed rounds in the metrics-log schema. Feature vectors go
out as plain JSON number arrays whose decimal form parses back to the
identical float.
"""

from __future__ import annotations

import json
import secrets
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from . import al_runtime as rt

PHASE_TRAINING = "TRAINING"
PHASE_AWAITING = "AWAITING_LABELS"
PHASE_DONE = "DONE"


class Session:
    """One experiment run plus the state the console polls."""

    def __init__(self, config: rt.ExperimentConfig, oracle_timeout: float | None,
                 out_path: str | None):
        self.id = secrets.token_hex(8)
        self.config = config
        self.oracle = rt.InteractiveOracle(timeout=oracle_timeout)
        self.out_path = out_path
        self.records: list[rt.RoundRecord] = []
        self.error: str | None = None
        self.finished = False
        self.current_round = 0
        self._lock = threading.Lock()
        self._thread = threading.Thread(target=self._run, daemon=True,
                                        name=f"session-{self.id}")

    def start(self) -> None:
        self._thread.start()

    def _run(self) -> None:
        sink = open(self.out_path, "w") if self.out_path else None

        def on_record(record: rt.RoundRecord) -> None:
            with self._lock:
                self.records.append(record)
            if sink is not None:
                sink.write(rt.metrics_line(record) + "\n")
                sink.flush()

        def on_event(name: str, payload: dict) -> None:
            if name == "train_start":
                with self._lock:
                    self.current_round = payload["round"]

        try:
            rt.run_experiment(self.config, self.oracle,
                              on_record=on_record, on_event=on_event)
        except rt.ExperimentPaused as exc:
            with self._lock:
                self.error = f"labeling timed out: {exc}"
        except Exception as exc:  # surface background failures to the console
            with self._lock:
                self.error = f"experiment failed: {exc}"
        finally:
            with self._lock:
                self.finished = True
            if sink is not None:
                sink.close()

    # -- snapshots ----------------------------------------------------------

    def is_active(self) -> bool:
        return not self.finished

    def batch_payload(self) -> dict:
        view = self.oracle.pending_view()
        if view is not None:
            pool = self.oracle.pool
            items = []
            metadata = view["metadata"] or [None] * len(view["batch"])
            for idx, score in zip(view["batch"], metadata):
                item = {"index": idx,
                        "features": [float(v) for v in pool.features[idx]]}
                if score is not None:
                    item["uncertainty"] = score.uncertainty
                    item["diversity"] = score.diversity
                    item["combined"] = score.combined
                items.append(item)
            with self._lock:
                rnd, rounds = self.current_round, self.config.rounds
            return {"phase": PHASE_AWAITING, "round": rnd, "rounds": rounds,
                    "n_classes": pool.n_classes, "items": items,
                    "received": {str(k): v for k, v in view["received"].items()}}
        with self._lock:
            if self.finished:
                payload = {"phase": PHASE_DONE, "rounds_completed": len(self.records)}
                if self.error:
                    payload["error"] = self.error
                return payload
            progress = len(self.records) / self.config.rounds
            return {"phase": PHASE_TRAINING, "round": self.current_round,
                    "rounds": self.config.rounds, "progress": progress}

    def metrics_payload(self) -> list[dict]:
        with self._lock:
            return [r.to_json_dict(include_timings=False) for r in self.records]


class _Handler(BaseHTTPRequestHandler):
    server_version = "waal-label-server/1.0"
    protocol_version = "HTTP/1.1"

    # -- plumbing ------------------------------------------------------------

    def log_message(self, fmt, *args):  # quiet by default; the CLI logs instead
        pass

    def _cors(self) -> None:
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")

    def _reply(self, status: int, payload) -> None:
        body = json.dumps(payload).encode()
        self.send_response(status)
        self._cors()
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _read_json(self):
        length = int(self.headers.get("Content-Length", 0) or 0)
        raw = self.rfile.read(length) if length else b""
        if not raw.strip():
            return {}
        try:
            return json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ValueError(f"request body is not valid JSON: {exc.msg}") from None

    def _route(self):
        parts = [p for p in self.path.split("?")[0].split("/") if p]
        return parts

    def _session_for(self, sid: str) -> Session | None:
        session = self.server.session
        if session is not None and session.id == sid:
            return session
        return None

    # -- methods --------------------------------------------------------------

    def do_OPTIONS(self):
        self.send_response(204)
        self._cors()
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        parts = self._route()
        if len(parts) == 3 and parts[0] == "session":
            session = self._session_for(parts[1])
            if session is None:
                return self._reply(404, {"error": f"unknown session {parts[1]}"})
            if parts[2] == "batch":
                return self._reply(200, session.batch_payload())
            if parts[2] == "metrics":
                return self._reply(200, session.metrics_payload())
        return self._reply(404, {"error": f"no such endpoint: {self.path}"})

    def do_POST(self):
        parts = self._route()
        try:
            body = self._read_json()
        except ValueError as exc:
            return self._reply(400, {"error": str(exc)})

        if parts == ["session"]:
            return self._create_session(body)
        if len(parts) == 3 and parts[0] == "session" and parts[2] == "labels":
            session = self._session_for(parts[1])
            if session is None:
                return self._reply(404, {"error": f"unknown session {parts[1]}"})
            return self._submit_labels(session, body)
        return self._reply(404, {"error": f"no such endpoint: {self.path}"})

    # -- handlers --------------------------------------------------------------

    def _create_session(self, body: dict):
        server: LabelServer = self.server
        with server.session_lock:
            if server.session is not None and server.session.is_active():
                return self._reply(409, {"error": "a session is already active",
                                         "session_id": server.session.id})
            if body:
                try:
                    configs, out_path, timeout = rt.parse_config_dict(body)
                except ValueError as exc:
                    return self._reply(400, {"error": str(exc)})
                config = configs[0]
                timeout = timeout if timeout is not None else server.oracle_timeout
            else:
                if server.default_config is None:
                    return self._reply(400, {"error": "config body required "
                                                      "(no default configured)"})
                config = server.default_config
                out_path = server.out_path
                timeout = server.oracle_timeout
            session = Session(config, timeout, out_path)
            server.session = session
            session.start()
        return self._reply(201, {"session_id": session.id,
                                 "rounds": config.rounds,
                                 "budget": config.budget})

    def _submit_labels(self, session: Session, body: dict):
        labels = body.get("labels")
        if not isinstance(labels, dict) or not labels:
            return self._reply(400, {"error": "body must be {\"labels\": "
                                              "{index: class, ...}}"})
        try:
            parsed = {int(k): int(v) for k, v in labels.items()}
        except (TypeError, ValueError):
            return self._reply(400, {"error": "label keys and values must be integers"})
        try:
            session.oracle.submit(parsed)
        except rt.LabelConflictError as exc:
            return self._reply(409, {"error": str(exc)})
        except rt.LabelSubmissionError as exc:
            return self._reply(422, {"error": str(exc)})
        view = session.oracle.pending_view()
        complete = view is None or len(view["received"]) == len(view["batch"])
        received = len(view["received"]) if view else None
        return self._reply(200, {"accepted": True, "complete": complete,
                                 "received": received})


class LabelServer(ThreadingHTTPServer):
    """Single-session annotation API server."""

    daemon_threads = True

    def __init__(self, host: str, port: int,
                 default_config: rt.ExperimentConfig | None = None,
                 oracle_timeout: float | None = None,
                 out_path: str | None = None):
        super().__init__((host, port), _Handler)
        self.session: Session | None = None
        self.session_lock = threading.Lock()
        self.default_config = default_config
        self.oracle_timeout = oracle_timeout
        self.out_path = out_path

    @property
    def port(self) -> int:
        return self.server_address[1]
