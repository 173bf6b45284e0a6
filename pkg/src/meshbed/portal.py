"""HTTP portal: the single entry point for experimenters and the web UI.

Endpoints (documented with payloads in docs/api.md):

    POST   /experiments                submit .desc text -> validation + id
    GET    /experiments[/{id}]         stored descriptions (reuse workflow)
    POST   /experiments/{id}/schedule  queue at a start time
    GET    /queue                      schedule entries with phases
    GET    /runs/{id}                  one replication run with its events
    DELETE /runs/{id}                  abort a non-terminal run
    GET    /nodes                      inventory plus availability
    GET    /nodes/{id}/monitoring      monitoring records in a window
    GET    /reports/usage              usage report for a period
    POST   /pipelines                  run a .eval pipeline
    GET    /health                     liveness and clock

Mutating requests carry ``Authorization: Bearer <token>`` against the
static token table from the service config; aborting someone else's run
needs the admin role. Every accepted mutation is audited as a run_event
record (user, time, action). All state lives behind the engine lock, so
concurrent requests serialize into the scheduler.
"""

import json
import mimetypes
import re
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlsplit

from . import descript, evaluation, generate, monitor as monitor_mod
from .config import ServiceConfig, TokenInfo
from .fleet import spawn
from .monitor import Monitor, MonitorError
from .orchestrator import Engine, Orchestrator, OrchestratorError
from .protocol import ControlClient
from .sectiontext import FormatError
from .store import QueryFilter, Store
from .util import canonical_json


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, **extra):
        super().__init__(message)
        self.status = status
        self.code = code
        self.extra = extra

    def doc(self) -> dict:
        return {"error": {"code": self.code, "message": str(self), **self.extra}}


class ServiceStack:
    """Fleet + store + engine + orchestrator + monitor, wired together."""

    def __init__(self, config: ServiceConfig, store_path: str | None = None):
        self.config = config
        self.fleet = spawn(config.fleet)
        self.control = ControlClient.local(self.fleet)
        self.store = Store(store_path, clock=lambda: self.fleet.now)
        self.engine = Engine(self.control, self.store)
        self.orchestrator = Orchestrator(
            self.engine, seed=config.seed,
            prepare_retries=config.prepare_retries,
            retry_delay_s=config.retry_delay_s)
        self.monitor = Monitor(self.control, self.store,
                               cadence_s=config.poll_cadence_s)
        self.descriptions: dict[str, descript.ExperimentDescription] = {}
        for record in self.store.query(QueryFilter(kinds={"description"})):
            desc = descript.parse(record.payload["text"])
            self.descriptions[desc.id] = desc

    def attach_monitor(self):
        self.monitor.attach(self.engine, start=self.engine.now)

    def kick(self):
        """Process everything due at the current instant."""
        self.engine.run(until=self.engine.now, inclusive=True)

    def submit(self, text: str, user: str, store_it: bool = True):
        desc = descript.parse(text)
        report = descript.validate(desc, self.orchestrator.inventory)
        if report.ok and store_it:
            self.store.append("description",
                              {"id": desc.id, "user": user,
                               "text": descript.serialize(desc)})
            self.descriptions[desc.id] = desc
        return desc, report

    def run_workload(self, *, experiments: int, horizon_s: int, seed: int,
                     max_nodes=None, mean_nodes=None, max_replications=3,
                     user_pool: int = 8):
        """Generate, submit and run a whole scenario in virtual time."""
        import random as random_mod
        rng = random_mod.Random(seed)
        plan = generate.workload(
            rng, self.orchestrator.inventory, experiments=experiments,
            horizon_s=horizon_s, max_nodes=max_nodes, mean_nodes=mean_nodes,
            max_replications=max_replications)
        for when, desc in plan:
            self.store.append("description",
                              {"id": desc.id, "user": "generator",
                               "text": descript.serialize(desc)})
            self.descriptions[desc.id] = desc
            self.orchestrator.schedule(desc, start=when,
                                       user=f"user{rng.randrange(user_pool)}")
        self.engine.run(until=horizon_s)
        self.monitor.detach()
        self.engine.run()       # drain the backlog past the horizon
        return plan


class Pacer(threading.Thread):
    """Advances virtual time from wall time (serve mode)."""

    def __init__(self, stack: ServiceStack, pace: float, tick_s: float = 0.2):
        super().__init__(daemon=True)
        self.stack = stack
        self.pace = pace
        self.tick_s = tick_s
        self._stop = threading.Event()

    def run(self):
        backlog = 0.0
        while not self._stop.is_set():
            time.sleep(self.tick_s)
            backlog += self.pace * self.tick_s
            step = int(backlog)
            if step >= 1:
                backlog -= step
                self.stack.engine.run(until=self.stack.engine.now + step)

    def stop(self):
        self._stop.set()


def _json_bytes(doc) -> bytes:
    return canonical_json(doc).encode("utf-8") + b"\n"


class PortalHandler(BaseHTTPRequestHandler):
    server_version = "meshbed-portal/0.1"
    protocol_version = "HTTP/1.1"

    # routing table: (method, compiled pattern, handler name, mutating)
    ROUTES = [
        ("GET", re.compile(r"^/health$"), "health", False),
        ("POST", re.compile(r"^/experiments$"), "submit_experiment", True),
        ("GET", re.compile(r"^/experiments$"), "list_experiments", False),
        ("GET", re.compile(r"^/experiments/([A-Za-z0-9_.\-]+)$"),
         "get_experiment", False),
        ("POST", re.compile(r"^/experiments/([A-Za-z0-9_.\-]+)/schedule$"),
         "schedule_experiment", True),
        ("GET", re.compile(r"^/queue$"), "queue", False),
        ("GET", re.compile(r"^/runs/([A-Za-z0-9_.\-]+)$"), "get_run", False),
        ("DELETE", re.compile(r"^/runs/([A-Za-z0-9_.\-]+)$"), "abort_run", True),
        ("GET", re.compile(r"^/nodes$"), "nodes", False),
        ("GET", re.compile(r"^/nodes/([A-Za-z0-9_.\-]+)/monitoring$"),
         "node_monitoring", False),
        ("GET", re.compile(r"^/reports/usage$"), "usage", False),
        ("POST", re.compile(r"^/pipelines$"), "pipelines", True),
    ]

    def log_message(self, fmt, *args):      # quiet by default
        if self.server.verbose:
            super().log_message(fmt, *args)

    # -- plumbing ------------------------------------------------------------

    @property
    def stack(self) -> ServiceStack:
        return self.server.stack

    def _query(self) -> dict:
        return {k: v[-1] for k, v in
                parse_qs(urlsplit(self.path).query).items()}

    def _body(self) -> bytes:
        length = int(self.headers.get("Content-Length") or 0)
        return self.rfile.read(length) if length else b""

    def _send(self, status: int, content: bytes,
              media_type: str = "application/json"):
        self.send_response(status)
        self.send_header("Content-Type", media_type)
        self.send_header("Content-Length", str(len(content)))
        self.end_headers()
        self.wfile.write(content)

    def _send_doc(self, status: int, doc):
        self._send(status, _json_bytes(doc))

    def _auth(self) -> TokenInfo:
        header = self.headers.get("Authorization") or ""
        if not header.startswith("Bearer "):
            raise ApiError(401, "AUTH", "missing bearer token")
        token = self.server.tokens.get(header[len("Bearer "):])
        if token is None:
            raise ApiError(401, "AUTH", "unknown token")
        if token.expires is not None and time.time() >= token.expires:
            raise ApiError(401, "AUTH", "token expired")
        return token

    def _audit(self, token: TokenInfo, status: int, detail: dict):
        self.stack.store.append("run_event", {
            "event": "api", "user": token.user, "method": self.command,
            "path": urlsplit(self.path).path, "status": status, **detail})

    def _dispatch(self):
        path = urlsplit(self.path).path
        if path.startswith("/ui"):
            return self._static(path)
        for method, pattern, name, mutating in self.ROUTES:
            if method != self.command:
                continue
            match = pattern.match(path)
            if match:
                try:
                    token = self._auth() if mutating else None
                    with self.stack.engine.lock:
                        status, doc = getattr(self, name)(token,
                                                          *match.groups())
                        if mutating and 200 <= status < 300:
                            self._audit(token, status, {})
                except ApiError as err:
                    self._send_doc(err.status, err.doc())
                    return
                except (FormatError, evaluation.PipelineError) as err:
                    self._send_doc(400, {"error": {"code": "BAD_INPUT",
                                                   "message": str(err)}})
                    return
                if isinstance(doc, evaluation.PipelineResult):
                    self._send(status, doc.content, doc.media_type)
                else:
                    self._send_doc(status, doc)
                return
        self._send_doc(404, {"error": {"code": "NO_ROUTE",
                                       "message": f"no route for {path}"}})

    def do_GET(self):
        self._dispatch()

    def do_POST(self):
        self._dispatch()

    def do_DELETE(self):
        self._dispatch()

    def _static(self, path: str):
        root = self.server.ui_dir
        if root is None:
            self._send_doc(404, {"error": {"code": "NO_UI",
                                           "message": "web UI not installed"}})
            return
        rel = path[len("/ui"):].lstrip("/") or "index.html"
        target = (root / rel).resolve()
        if not str(target).startswith(str(root.resolve())) or not target.is_file():
            self._send_doc(404, {"error": {"code": "NOT_FOUND",
                                           "message": path}})
            return
        media = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        self._send(200, target.read_bytes(), media)

    # -- endpoints ----------------------------------------------------------------

    def health(self, _token):
        with self.stack.engine.lock:
            queue = self.stack.orchestrator.entries
            doc = {
                "status": "ok",
                "now": self.stack.engine.now,
                "nodes": len(self.stack.orchestrator.inventory),
                "queue_depth": sum(1 for e in queue if not e.terminal),
            }
        return 200, doc

    def submit_experiment(self, token):
        text = self._body().decode("utf-8")
        validate_only = self._query().get("validate_only") in ("1", "true")
        try:
            desc, report = self.stack.submit(text, token.user,
                                             store_it=not validate_only)
        except FormatError as err:
            raise ApiError(400, "PARSE", err.message,
                           line=err.line, col=err.col)
        doc = {"id": desc.id, "report": report.to_doc()}
        if not report.ok:
            return 400, {**doc, "error": {"code": "VALIDATION",
                                          "message": "description invalid"}}
        self.stack.kick()
        return (200 if validate_only else 201), doc

    def list_experiments(self, _token):
        docs = [{"id": desc_id, "title": desc.title, "topic": desc.topic}
                for desc_id, desc in sorted(self.stack.descriptions.items())]
        return 200, {"experiments": docs}

    def get_experiment(self, _token, desc_id: str):
        desc = self.stack.descriptions.get(desc_id)
        if desc is None:
            raise ApiError(404, "NOT_FOUND", f"no experiment {desc_id!r}")
        return 200, {"id": desc_id, "text": descript.serialize(desc)}

    def schedule_experiment(self, token, desc_id: str):
        desc = self.stack.descriptions.get(desc_id)
        if desc is None:
            raise ApiError(404, "NOT_FOUND", f"no experiment {desc_id!r}")
        try:
            body = json.loads(self._body() or b"{}")
        except json.JSONDecodeError as err:
            raise ApiError(400, "BAD_JSON", str(err))
        start = body.get("start", self.stack.engine.now)
        try:
            entry = self.stack.orchestrator.schedule(desc, int(start),
                                                     user=token.user)
        except OrchestratorError as err:
            raise ApiError(400, err.code, str(err),
                           **({"report": err.report.to_doc()}
                              if err.report else {}))
        self.stack.kick()
        return 201, {"entry": entry.to_doc()}

    def queue(self, _token):
        return 200, {"now": self.stack.engine.now,
                     "entries": self.stack.orchestrator.queue_doc()}

    def get_run(self, _token, run_id: str):
        run = self.stack.orchestrator.runs.get(run_id)
        if run is None:
            raise ApiError(404, "NOT_FOUND", f"no run {run_id!r}")
        events = [r.payload for r in self.stack.store.query(
            QueryFilter(kinds={"run_event"}, run_id=run_id))]
        return 200, {"run": run.to_doc(), "events": events}

    def abort_run(self, token, run_id: str):
        orch = self.stack.orchestrator
        run = orch.runs.get(run_id)
        if run is not None and token.role != "admin":
            entry = orch.entry_by_seq(run.entry_seq)
            if entry is not None and entry.user != token.user:
                raise ApiError(403, "FORBIDDEN",
                               "only the owner or an admin may abort this run")
        try:
            run = orch.abort(run_id)
        except OrchestratorError as err:
            if err.code == "UNKNOWN_RUN":
                raise ApiError(404, err.code, str(err))
            raise ApiError(409, err.code, str(err))
        self.stack.kick()
        return 200, {"run": run.to_doc()}

    def nodes(self, _token):
        query = self._query()
        window = int(query.get("window", "3600"))
        now = self.stack.engine.now
        start = max(0, now - window)
        out = []
        for node in self.stack.orchestrator.inventory:
            try:
                avail = monitor_mod.availability(self.stack.store, node.id,
                                                 start, max(now, start + 1))
            except MonitorError:
                avail = None
            up_now = self.stack.control.poll(node.id)["up"]
            out.append({"id": node.id, "building": node.building,
                        "degree": node.degree, "up": up_now,
                        "availability": avail})
        return 200, {"now": now, "window": window, "nodes": out}

    def node_monitoring(self, _token, node_id: str):
        if all(n.id != node_id for n in self.stack.orchestrator.inventory):
            raise ApiError(404, "NOT_FOUND", f"no node {node_id!r}")
        t_start, t_end = self._window_param()
        records = self.stack.store.query(QueryFilter(
            kinds={"monitoring_data"}, node_id=node_id,
            t_min=t_start, t_max=t_end))
        return 200, {"node": node_id, "window": [t_start, t_end],
                     "records": [{"timestamp": r.timestamp, **r.payload}
                                 for r in records]}

    def _window_param(self, key: str = "window"):
        raw = self._query().get(key)
        now = self.stack.engine.now
        if raw is None:
            return max(0, now - 3600), now + 1
        match = re.match(r"^(\d+):(\d+)$", raw)
        if match is None:
            raise ApiError(400, "BAD_WINDOW", f"{key} must be t0:t1")
        return int(match.group(1)), int(match.group(2))

    def usage(self, _token):
        query = self._query()
        raw = query.get("period")
        if raw in (None, "all"):
            period = (0, self.stack.engine.now + 1)
        else:
            match = re.match(r"^(\d+):(\d+)$", raw)
            if match is None:
                raise ApiError(400, "BAD_PERIOD", "period must be t0:t1 or all")
            period = (int(match.group(1)), int(match.group(2)))
        try:
            report = evaluation.usage_report(
                self.stack.store.query(QueryFilter(
                    kinds={"run_event", "monitoring_data"})),
                period,
                runtime_bin_h=float(query.get("runtime_bin_h", "1")),
                nodes_bin=float(query.get("nodes_bin", "10")))
        except ValueError as err:
            raise ApiError(400, "BAD_PERIOD", str(err))
        return 200, report.to_doc()

    def pipelines(self, _token):
        text = self._body().decode("utf-8")
        spec = evaluation.parse_pipeline(text)
        result = evaluation.run_pipeline(spec, store=self.stack.store)
        return 200, result


class PortalServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, stack: ServiceStack, host: str = "127.0.0.1",
                 port: int = 0, ui_dir: str | None = None,
                 verbose: bool = False):
        super().__init__((host, port), PortalHandler)
        self.stack = stack
        self.tokens = stack.config.tokens
        self.ui_dir = Path(ui_dir) if ui_dir else None
        self.verbose = verbose

    @property
    def endpoint(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"


def serve(config: ServiceConfig, store_path: str | None = None,
          ui_dir: str | None = None, verbose: bool = False,
          ready=None):
    """Run the full service stack until interrupted."""
    stack = ServiceStack(config, store_path=store_path)
    stack.attach_monitor()
    server = PortalServer(stack, host=config.host, port=config.port,
                          ui_dir=ui_dir, verbose=verbose)
    pacer = Pacer(stack, config.pace) if config.pace > 0 else None
    if pacer:
        pacer.start()
    if ready is not None:
        ready(server)
    try:
        server.serve_forever()
    finally:
        if pacer:
            pacer.stop()
        server.server_close()
        stack.store.close()
