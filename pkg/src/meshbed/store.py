"""Central append-only data store.

Every artifact of the workflow lands here as a Record: stored experiment
descriptions, measurement data produced by experiment actions
(experiment_data, always tied to a run), periodic node observations
(monitoring_data, always tied to a node), and the orchestrator's life-cycle
events (run_event). Records are immutable, identified by a strictly
increasing integer id, timestamped by the store itself at append time.

Storage is one append-only log file (length-prefixed canonical JSON
documents, see docs/store-format.md) plus an in-memory index rebuilt on
open. A torn final record from a crashed writer is dropped on open. Appends
are serialized through a lock and flushed to the OS before returning;
pass fsync=True for power-loss durability.
"""

import io
import json
import os
import threading
import time
from dataclasses import dataclass, field

from .util import canonical_json

KINDS = ("description", "experiment_data", "monitoring_data", "run_event")


class StoreError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass
class Record:
    id: int
    kind: str
    timestamp: int
    run_id: str | None
    node_id: str | None
    payload: dict

    def to_doc(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "timestamp": self.timestamp,
            "run_id": self.run_id,
            "node_id": self.node_id,
            "payload": self.payload,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "Record":
        return cls(
            id=doc["id"],
            kind=doc["kind"],
            timestamp=doc["timestamp"],
            run_id=doc.get("run_id"),
            node_id=doc.get("node_id"),
            payload=doc.get("payload", {}),
        )


@dataclass
class QueryFilter:
    """Conjunction of clauses; an empty filter matches every record."""

    kinds: set[str] | None = None
    t_min: int | None = None           # inclusive
    t_max: int | None = None           # exclusive
    run_id: str | None = None
    node_id: str | None = None
    payload_eq: dict = field(default_factory=dict)
    payload_range: dict = field(default_factory=dict)   # key -> (lo, hi) incl.

    def matches(self, record: Record) -> bool:
        if self.kinds is not None and record.kind not in self.kinds:
            return False
        if self.t_min is not None and record.timestamp < self.t_min:
            return False
        if self.t_max is not None and record.timestamp >= self.t_max:
            return False
        if self.run_id is not None and record.run_id != self.run_id:
            return False
        if self.node_id is not None and record.node_id != self.node_id:
            return False
        for key, expected in self.payload_eq.items():
            if record.payload.get(key) != expected:
                return False
        for key, (lo, hi) in self.payload_range.items():
            value = record.payload.get(key)
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                return False
            if value < lo or value > hi:
                return False
        return True


def _wall_clock() -> int:
    return int(time.time())


class Store:
    """Append-only record log with linear-scan query semantics.

    The clock callable is the store's single timestamp authority; callers
    never supply timestamps. In the simulation stack it is the fleet's
    virtual clock, so a seeded scenario exports byte-identically.
    """

    def __init__(self, path: str | None, clock=None, fsync: bool = False):
        self._lock = threading.Lock()
        self._clock = clock if clock is not None else _wall_clock
        self._fsync = fsync
        self._records: list[Record] = []
        self._last_id = 0
        self._last_ts = 0
        self._path = path
        self._file: io.BufferedWriter | None = None
        if path is not None:
            self._open_log(path)

    # -- log file -------------------------------------------------------

    def _open_log(self, path: str):
        if os.path.exists(path):
            with open(path, "rb") as fh:
                data = fh.read()
            usable = self._load(data)
            if usable < len(data):
                # torn tail from a crashed writer: truncate it away
                with open(path, "r+b") as fh:
                    fh.truncate(usable)
        self._file = open(path, "ab")

    def _load(self, data: bytes) -> int:
        pos = 0
        while pos < len(data):
            nl = data.find(b"\n", pos)
            if nl < 0:
                return pos
            length_text = data[pos:nl]
            if not length_text.isdigit():
                return pos
            length = int(length_text)
            body_start = nl + 1
            body_end = body_start + length
            if body_end + 1 > len(data) or data[body_end:body_end + 1] != b"\n":
                return pos
            try:
                doc = json.loads(data[body_start:body_end].decode("utf-8"))
                record = Record.from_doc(doc)
            except (ValueError, KeyError):
                return pos
            if record.id <= self._last_id:
                raise StoreError("CORRUPT_LOG",
                                 f"non-increasing record id {record.id}")
            self._records.append(record)
            self._last_id = record.id
            self._last_ts = max(self._last_ts, record.timestamp)
            pos = body_end + 1
        return pos

    def _write(self, record: Record):
        if self._file is None:
            return
        body = canonical_json(record.to_doc()).encode("utf-8")
        self._file.write(b"%d\n%s\n" % (len(body), body))
        self._file.flush()
        if self._fsync:
            os.fsync(self._file.fileno())

    def close(self):
        with self._lock:
            if self._file is not None:
                self._file.close()
                self._file = None

    # -- operations -----------------------------------------------------

    def append(self, kind: str, payload: dict, *, run_id: str | None = None,
               node_id: str | None = None) -> int:
        """Append one record; returns its id once the record is durable."""
        if kind not in KINDS:
            raise StoreError("BAD_KIND", f"unknown record kind {kind!r}")
        if kind == "experiment_data" and run_id is None:
            raise StoreError("MISSING_RUN_ID",
                             "experiment_data records must carry a run_id")
        if kind == "monitoring_data" and node_id is None:
            raise StoreError("MISSING_NODE_ID",
                             "monitoring_data records must carry a node_id")
        with self._lock:
            # the store is the ordering authority: ids and timestamps are
            # both monotone in append order
            ts = max(int(self._clock()), self._last_ts)
            self._last_ts = ts
            self._last_id += 1
            record = Record(self._last_id, kind, ts, run_id, node_id,
                            payload)
            try:
                self._write(record)
            except OSError as err:
                self._last_id -= 1
                raise StoreError("UNWRITABLE", str(err)) from err
            self._records.append(record)
            return record.id

    def query(self, flt: QueryFilter | None = None) -> list[Record]:
        """All records matching every clause, in id order."""
        flt = flt or QueryFilter()
        with self._lock:
            snapshot = list(self._records)
        return [r for r in snapshot if flt.matches(r)]

    def get(self, record_id: int) -> Record | None:
        with self._lock:
            idx = record_id - 1
            if 0 <= idx < len(self._records):
                return self._records[idx]
        return None

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

    def export(self, flt: QueryFilter | None = None) -> bytes:
        """Newline-delimited canonical JSON of matching records."""
        out = io.BytesIO()
        for record in self.query(flt):
            out.write(canonical_json(record.to_doc()).encode("utf-8"))
            out.write(b"\n")
        return out.getvalue()

    def import_stream(self, stream: bytes):
        """Load an export stream into an empty store, preserving ids and
        timestamps (the re-import half of the export round-trip)."""
        with self._lock:
            if self._records:
                raise StoreError("NOT_EMPTY", "import requires an empty store")
        for record in read_export(stream):
            with self._lock:
                if record.id <= self._last_id:
                    raise StoreError("CORRUPT_LOG",
                                     f"non-increasing record id {record.id}")
                self._write(record)
                self._records.append(record)
                self._last_id = record.id
                self._last_ts = max(self._last_ts, record.timestamp)


def read_export(stream: bytes):
    """Yield Records from an export stream."""
    for line in stream.splitlines():
        if line.strip():
            yield Record.from_doc(json.loads(line.decode("utf-8")))
