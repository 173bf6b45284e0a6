"""Experiment scheduling and replicated execution with defined-state checks.

The Engine is a virtual-time event loop in front of the fleet's control
protocol: callbacks are ordered by (time, insertion sequence) and the fleet
clock is advanced between events, so a whole year of experiments runs in
seconds of wall time and every replay is identical.

The Orchestrator owns the schedule queue. Entries wait FIFO on node
conflicts: an entry activates once no active entry and no earlier waiting
entry shares any of its resolved nodes, so disjoint experiments run
concurrently and nobody is overtaken on a contested node. Each replication
walks pending -> preparing -> executing -> cleaning -> done/failed, with
abort allowed from any non-terminal phase (it still passes through
cleaning). Prepare resets every resolved node and records a state
fingerprint over the observable per-node configuration (channel,
running-traffic flag, temp-data flag); cleanup restores defaults and must
fingerprint back to the fleet baseline. Fingerprints hash the sorted
multiset of config tuples, so replications of one experiment must land in
the same defined state even when dynamic selection re-resolves.

Dynamic groups resolve deterministically: static groups bind first, then
attribute predicates (building/degree, first-fit by inventory order), then
`random` groups from a seeded substream. The validator dry-runs the same
procedure, so a description it accepts never fails resolution against the
same inventory. A node that is down during cleanup counts as
default-configured: its watchdog reboot restores defaults on return.

Replication independence is enforced by node-set exclusivity plus seeded
determinism: every measurement stream is keyed by (seed, experiment, j,
action, node), so reordering unrelated experiments cannot change a run's
data.
"""

import heapq
import math
import random
import threading
from dataclasses import dataclass, field

from . import descript
from .descript import (
    ExperimentDescription,
    GroupResolutionError,
    InventoryNode,
    resolve_groups,
)
from .protocol import ControlClient, ControlError
from .stats import normal_ppf
from .store import Store
from .util import canonical_json, derive_seed, sha256_hex

TERMINAL_PHASES = ("done", "failed", "aborted")


class OrchestratorError(Exception):
    def __init__(self, code: str, message: str, report=None):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.report = report


# --- engine -------------------------------------------------------------------

class Engine:
    """Deterministic virtual-time event loop over a control channel."""

    def __init__(self, control: ControlClient, store: Store):
        self.control = control
        self.store = store
        self.lock = threading.RLock()
        self.now = int(control.inventory()["now"])
        self._queue: list[tuple[int, int, object]] = []
        self._seq = 0

    def at(self, when: int, fn):
        with self.lock:
            when = max(when, self.now)
            self._seq += 1
            heapq.heappush(self._queue, (when, self._seq, fn))

    def after(self, delay: int, fn):
        self.at(self.now + delay, fn)

    def every(self, cadence: int, fn, start: int | None = None) -> "PeriodicTask":
        task = PeriodicTask(self, cadence, fn)
        self.at(self.now if start is None else start, task)
        return task

    def _advance_to(self, when: int):
        if when > self.now:
            self.control.advance(when - self.now)
            self.now = when

    def run(self, until: int | None = None, stop_when=None,
            inclusive: bool = False):
        """Process events with time < until (or to idle), then land the
        clock exactly on until. inclusive also takes events at until."""
        while True:
            with self.lock:
                if not self._queue:
                    break
                when, _, fn = self._queue[0]
                if until is not None and (when > until if inclusive
                                          else when >= until):
                    break
                heapq.heappop(self._queue)
                self._advance_to(when)
                fn()
                if stop_when is not None and stop_when():
                    return
        if until is not None:
            with self.lock:
                self._advance_to(until)


class PeriodicTask:
    def __init__(self, engine: Engine, cadence: int, fn):
        self.engine = engine
        self.cadence = cadence
        self.fn = fn
        self.cancelled = False

    def cancel(self):
        self.cancelled = True

    def __call__(self):
        if self.cancelled:
            return
        self.fn()
        self.engine.at(self.engine.now + self.cadence, self)


# --- fingerprints ---------------------------------------------------------------

def fingerprint(config_tuples) -> str:
    """Hash of the sorted multiset of observable per-node config tuples."""
    normalized = sorted([list(t) for t in config_tuples])
    return sha256_hex(canonical_json(normalized))


def baseline_fingerprint(node_count: int, default_channel: int = 6) -> str:
    return fingerprint([(default_channel, False, False)] * node_count)


def config_tuple_from_poll(doc: dict, default_channel: int) -> tuple:
    if not doc.get("up"):
        # a down node reboots into defaults; count it as such
        return (default_channel, False, False)
    return (doc["channel"], doc["traffic"], doc["temp"])


# --- replication count formula ---------------------------------------------------

def required_replications(mean: float, stddev: float, confidence: float = 0.95,
                          rel_error: float = 0.05) -> int:
    """Smallest n whose normal-approximation CI half-width z*s/sqrt(n) is
    within rel_error of the mean: n = ceil((z*s/(rel_error*mean))^2), min 1."""
    if mean == 0:
        raise ValueError("mean must be nonzero")
    if stddev < 0:
        raise ValueError("stddev must be non-negative")
    if rel_error <= 0:
        raise ValueError("rel_error must be positive")
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must be in (0, 1)")
    if stddev == 0:
        return 1
    z = normal_ppf((1.0 + confidence) / 2.0)
    q = (z * stddev / (rel_error * abs(mean))) ** 2
    return max(1, math.ceil(q - 1e-12))


# --- schedule data model -----------------------------------------------------------

@dataclass
class ReplicationRun:
    run_id: str
    experiment_id: str
    entry_seq: int
    j: int
    nodes: tuple[str, ...]
    phase: str = "pending"
    started: int = 0
    ended: int | None = None
    prepare_fingerprint: str | None = None
    cleanup_fingerprint: str | None = None
    observations: list[int] = field(default_factory=list)
    abort_requested: bool = False
    prepare_failed: bool = False
    failed_critical: bool = False
    exec_start: int = 0
    _actions_remaining: int = 0
    _cleanup_remaining: int = 0
    _max_completion: int = 0

    @property
    def terminal(self) -> bool:
        return self.phase in TERMINAL_PHASES

    def to_doc(self) -> dict:
        return {
            "run_id": self.run_id,
            "experiment_id": self.experiment_id,
            "replication": self.j,
            "phase": self.phase,
            "nodes": list(self.nodes),
            "started": self.started,
            "ended": self.ended,
            "prepare_fingerprint": self.prepare_fingerprint,
            "cleanup_fingerprint": self.cleanup_fingerprint,
            "observations": list(self.observations),
        }


@dataclass
class ScheduleEntry:
    seq: int
    desc: ExperimentDescription
    user: str
    requested_start: int
    status: str = "queued"                 # queued|active|done|aborted|failed
    group_nodes: dict[str, tuple[str, ...]] = field(default_factory=dict)
    resolved_nodes: tuple[str, ...] = ()
    runs: list[ReplicationRun] = field(default_factory=list)
    activated_at: int | None = None
    finished_at: int | None = None

    @property
    def experiment_id(self) -> str:
        return self.desc.id

    @property
    def terminal(self) -> bool:
        return self.status in ("done", "aborted", "failed")

    def to_doc(self) -> dict:
        return {
            "seq": self.seq,
            "experiment_id": self.experiment_id,
            "user": self.user,
            "requested_start": self.requested_start,
            "status": self.status,
            "replications": self.desc.replications,
            "nodes": list(self.resolved_nodes),
            "activated_at": self.activated_at,
            "finished_at": self.finished_at,
            "runs": [r.to_doc() for r in self.runs],
        }


# --- orchestrator ------------------------------------------------------------------

class Orchestrator:
    def __init__(self, engine: Engine, *, seed: int = 0, user: str = "local",
                 prepare_retries: int = 3, retry_delay_s: int = 10,
                 auto_replications: bool = True):
        self.engine = engine
        self.control = engine.control
        self.store = engine.store
        self.seed = seed
        self.default_user = user
        self.prepare_retries = prepare_retries
        self.retry_delay_s = retry_delay_s
        self.auto_replications = auto_replications

        info = self.control.inventory()
        self.default_channel = info["default_channel"]
        self.inventory = [InventoryNode(n["id"], n["building"], n["degree"])
                          for n in info["nodes"]]
        self._node_index = {n.id: i for i, n in enumerate(self.inventory)}
        self.entries: list[ScheduleEntry] = []
        self.runs: dict[str, ReplicationRun] = {}
        self._seq = 0

    # -- events -----------------------------------------------------------

    def _event(self, payload: dict, run_id: str | None = None):
        self.store.append("run_event", payload, run_id=run_id)

    def baseline(self, node_count: int) -> str:
        return baseline_fingerprint(node_count, self.default_channel)

    # -- scheduling ---------------------------------------------------------

    def schedule(self, desc: ExperimentDescription, start: int,
                 user: str | None = None) -> ScheduleEntry:
        """Queue a validated description for activation at `start`."""
        if start < self.engine.now:
            raise OrchestratorError(
                "START_PAST", f"start {start} is before now {self.engine.now}")
        report = descript.validate(desc, self.inventory)
        if not report.ok:
            raise OrchestratorError(
                "VALIDATION", f"{len(report.errors)} validation errors",
                report=report)
        self._seq += 1
        entry = ScheduleEntry(seq=self._seq, desc=desc,
                              user=user or self.default_user,
                              requested_start=start)
        self.entries.append(entry)
        self._event({
            "event": "scheduled", "experiment_id": desc.id, "user": entry.user,
            "topic": desc.topic, "start": start, "priority": entry.seq,
            "replications": desc.replications,
        })
        self.engine.at(start, self._activation_scan)
        return entry

    def _resolve_for(self, entry: ScheduleEntry) -> dict[str, tuple[str, ...]]:
        rng = random.Random(derive_seed(self.seed, "resolve",
                                        entry.experiment_id, entry.seq))

        def chooser(group, candidates, count):
            return rng.sample(candidates, count)

        try:
            return resolve_groups(entry.desc, self.inventory, chooser)
        except GroupResolutionError as err:
            # unreachable for validated descriptions: validate() dry-runs
            # the same procedure against the same snapshot
            raise OrchestratorError("GROUP_UNSATISFIABLE", str(err)) from err

    def _activation_scan(self):
        blocked: set[str] = set()
        for entry in self.entries:
            if entry.status == "active":
                blocked.update(entry.resolved_nodes)
        for entry in self.entries:
            if entry.status != "queued" or entry.requested_start > self.engine.now:
                continue
            if not entry.group_nodes:
                entry.group_nodes = self._resolve_for(entry)
                nodes = sorted({n for members in entry.group_nodes.values()
                                for n in members},
                               key=lambda n: self._node_index[n])
                entry.resolved_nodes = tuple(nodes)
            if blocked.isdisjoint(entry.resolved_nodes):
                self._activate(entry)
            # either way these nodes are now spoken for: later entries in the
            # queue may not overtake a waiting conflict (FIFO per resource)
            blocked.update(entry.resolved_nodes)

    def _activate(self, entry: ScheduleEntry):
        entry.status = "active"
        entry.activated_at = self.engine.now
        self._event({
            "event": "activated", "experiment_id": entry.experiment_id,
            "priority": entry.seq, "nodes": list(entry.resolved_nodes),
        })
        if self.auto_replications:
            self.engine.at(self.engine.now,
                           lambda: self._start_replication(entry, 1))

    # -- replication lifecycle ------------------------------------------------

    def run_replication(self, entry: ScheduleEntry, j: int) -> ReplicationRun:
        """Drive one replication to a terminal phase (manual mode)."""
        if entry.status != "active":
            raise OrchestratorError("ENTRY_NOT_ACTIVE",
                                    f"entry {entry.seq} is {entry.status}")
        if j != len(entry.runs) + 1 or j > entry.desc.replications:
            raise OrchestratorError("BAD_REPLICATION",
                                    f"next replication is {len(entry.runs) + 1}")
        run = self._start_replication(entry, j)
        self.engine.run(stop_when=lambda: run.terminal)
        return run

    def _start_replication(self, entry: ScheduleEntry, j: int) -> ReplicationRun:
        run = ReplicationRun(
            run_id=f"{entry.seq}.{entry.experiment_id}.{j}",
            experiment_id=entry.experiment_id,
            entry_seq=entry.seq,
            j=j,
            nodes=entry.resolved_nodes,
            started=self.engine.now,
        )
        entry.runs.append(run)
        self.runs[run.run_id] = run
        self._phase(run, "preparing")
        self._prepare_attempt(entry, run, 1)
        return run

    def _phase(self, run: ReplicationRun, phase: str):
        run.phase = phase
        self._event({"event": "phase", "run_id": run.run_id,
                     "experiment_id": run.experiment_id, "replication": run.j,
                     "phase": phase}, run_id=run.run_id)

    def _prepare_attempt(self, entry: ScheduleEntry, run: ReplicationRun,
                         attempt: int):
        if run.phase != "preparing":
            return
        if run.abort_requested:
            self._begin_cleanup(entry, run)
            return
        unavailable = []
        for node in run.nodes:
            result = self.control.exec(node, "reset_config", {}, timeout=5,
                                       stream=f"{run.run_id}|prep|{node}")
            if result["status"] != "ok":
                unavailable.append(node)
        if unavailable:
            if attempt >= self.prepare_retries:
                run.prepare_failed = True
                self._event({"event": "prepare_failed", "run_id": run.run_id,
                             "nodes_down": unavailable, "attempts": attempt},
                            run_id=run.run_id)
                self._begin_cleanup(entry, run)
            else:
                self.engine.after(
                    self.retry_delay_s,
                    lambda: self._prepare_attempt(entry, run, attempt + 1))
            return
        tuples = [config_tuple_from_poll(self.control.poll(node),
                                         self.default_channel)
                  for node in run.nodes]
        run.prepare_fingerprint = fingerprint(tuples)
        self._event({"event": "fingerprint", "run_id": run.run_id,
                     "phase": "prepare", "value": run.prepare_fingerprint},
                    run_id=run.run_id)
        self._begin_execute(entry, run)

    def _begin_execute(self, entry: ScheduleEntry, run: ReplicationRun):
        self._phase(run, "executing")
        run.exec_start = self.engine.now
        run._actions_remaining = len(entry.desc.actions)
        run._max_completion = 0
        if not entry.desc.actions:
            self.engine.at(self.engine.now,
                           lambda: self._begin_cleanup(entry, run))
            return
        for idx, action in enumerate(entry.desc.actions):
            self.engine.at(run.exec_start + action.start_offset,
                           self._action_event(entry, run, idx))

    def _action_event(self, entry: ScheduleEntry, run: ReplicationRun, idx: int):
        def fire():
            if run.phase != "executing":
                return
            self._dispatch_action(entry, run, idx, record_data=True)
            run._actions_remaining -= 1
            if run._actions_remaining == 0:
                end_rel = min(entry.desc.duration_limit, run._max_completion)
                self.engine.at(max(self.engine.now,
                                   run.exec_start + end_rel),
                               lambda: self._begin_cleanup(entry, run))
        return fire

    def _targets(self, entry: ScheduleEntry, target: str) -> tuple[str, ...]:
        if target in entry.group_nodes:
            return entry.group_nodes[target]
        return (target,)

    def _dispatch_action(self, entry: ScheduleEntry, run: ReplicationRun,
                         idx: int, record_data: bool):
        desc = entry.desc
        action = (desc.actions if record_data else desc.cleanup)[idx]
        params = dict(action.params)
        if (action.command == "start_traffic" and "pattern" not in params
                and desc.traffic.pattern != "none"):
            params["pattern"] = desc.traffic.pattern
        if "dest" in params and params["dest"] in entry.group_nodes:
            members = entry.group_nodes[params["dest"]]
            if members:
                params["dest"] = members[0]
        for node in self._targets(entry, action.target):
            stream = f"{self.seed}|{run.experiment_id}|{run.j}|{idx}|{node}"
            try:
                result = self.control.exec(node, action.command, params,
                                           action.timeout, stream=stream)
            except ControlError as err:
                result = {"node": node, "command": action.command,
                          "status": "failed", "payload": {}, "span_s": 0,
                          "error": err.code}
            status = result["status"]
            if record_data:
                record_id = self.store.append(
                    "experiment_data",
                    {"command": action.command, "action_index": idx,
                     "status": status, "metrics": result["payload"],
                     "span_s": result["span_s"]},
                    run_id=run.run_id, node_id=node)
                run.observations.append(record_id)
                run._max_completion = max(
                    run._max_completion,
                    action.start_offset + int(result["span_s"]))
                if action.is_critical and status != "ok":
                    run.failed_critical = True
            self._event({"event": "action", "run_id": run.run_id, "node": node,
                         "command": action.command, "status": status,
                         "action_index": idx, "cleanup": not record_data},
                        run_id=run.run_id)

    def _begin_cleanup(self, entry: ScheduleEntry, run: ReplicationRun):
        if run.terminal or run.phase == "cleaning":
            return
        self._phase(run, "cleaning")
        cleanup_actions = entry.desc.cleanup
        run._cleanup_remaining = len(cleanup_actions)
        if not cleanup_actions:
            self.engine.at(self.engine.now,
                           lambda: self._finish_cleanup(entry, run))
            return
        start = self.engine.now
        for idx, action in enumerate(cleanup_actions):
            self.engine.at(start + action.start_offset,
                           self._cleanup_event(entry, run, idx))

    def _cleanup_event(self, entry: ScheduleEntry, run: ReplicationRun, idx: int):
        def fire():
            if run.phase != "cleaning":
                return
            self._dispatch_action(entry, run, idx, record_data=False)
            run._cleanup_remaining -= 1
            if run._cleanup_remaining == 0:
                self._finish_cleanup(entry, run)
        return fire

    def _finish_cleanup(self, entry: ScheduleEntry, run: ReplicationRun):
        if run.terminal:
            return
        for node in run.nodes:
            self.control.exec(node, "reset_config", {}, timeout=5,
                              stream=f"{run.run_id}|clean|{node}")
        tuples = [config_tuple_from_poll(self.control.poll(node),
                                         self.default_channel)
                  for node in run.nodes]
        run.cleanup_fingerprint = fingerprint(tuples)
        self._event({"event": "fingerprint", "run_id": run.run_id,
                     "phase": "cleanup", "value": run.cleanup_fingerprint},
                    run_id=run.run_id)
        if run.abort_requested:
            final = "aborted"
        elif run.prepare_failed or run.failed_critical:
            final = "failed"
        else:
            final = "done"
        run.phase = final
        run.ended = self.engine.now
        self._event({"event": "run_done", "run_id": run.run_id,
                     "experiment_id": run.experiment_id, "replication": run.j,
                     "phase": final, "started": run.started, "ended": run.ended,
                     "nodes": list(run.nodes),
                     "observations": len(run.observations)},
                    run_id=run.run_id)
        self._after_run(entry, run)

    def _after_run(self, entry: ScheduleEntry, run: ReplicationRun):
        if run.phase == "aborted":
            self._finish_entry(entry, "aborted")
            return
        if len(entry.runs) < entry.desc.replications and self.auto_replications:
            next_j = len(entry.runs) + 1
            self.engine.at(self.engine.now,
                           lambda: entry.status == "active"
                           and self._start_replication(entry, next_j))
            return
        if len(entry.runs) >= entry.desc.replications:
            failed = any(r.phase == "failed" for r in entry.runs)
            self._finish_entry(entry, "failed" if failed else "done")

    def _finish_entry(self, entry: ScheduleEntry, status: str):
        entry.status = status
        entry.finished_at = self.engine.now
        started = entry.activated_at if entry.activated_at is not None else entry.finished_at
        runtime_s = entry.finished_at - started
        self._event({
            "event": "experiment_done" if status != "aborted" else "entry_aborted",
            "experiment_id": entry.experiment_id,
            "status": status,
            "user": entry.user,
            "topic": entry.desc.topic,
            "started": started,
            "finished": entry.finished_at,
            "runtime_s": runtime_s,
            "runtime_h": runtime_s / 3600.0,
            "nodes_used": len(entry.resolved_nodes),
            "runs": [{"run_id": r.run_id, "phase": r.phase} for r in entry.runs],
        })
        self.engine.at(self.engine.now, self._activation_scan)

    # -- abort -----------------------------------------------------------------

    def abort(self, run_id: str) -> ReplicationRun:
        """Abort a non-terminal run; it still passes through cleaning, its
        entry releases its nodes, partial observations stay in the store."""
        run = self.runs.get(run_id)
        if run is None:
            raise OrchestratorError("UNKNOWN_RUN", f"no such run {run_id!r}")
        if run.terminal:
            raise OrchestratorError("RUN_TERMINAL",
                                    f"run {run_id} already {run.phase}")
        run.abort_requested = True
        self._event({"event": "abort_requested", "run_id": run.run_id},
                    run_id=run.run_id)
        entry = next(e for e in self.entries if e.seq == run.entry_seq)
        if run.phase in ("pending", "preparing", "executing"):
            self.engine.at(self.engine.now,
                           lambda: self._begin_cleanup(entry, run))
        return run

    # -- lookups ------------------------------------------------------------------

    def entry_by_seq(self, seq: int) -> ScheduleEntry | None:
        for entry in self.entries:
            if entry.seq == seq:
                return entry
        return None

    def queue_doc(self) -> list[dict]:
        return [e.to_doc() for e in self.entries]
