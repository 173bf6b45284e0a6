"""Independent periodic monitoring of the node fleet.

The monitor polls every inventory node on a fixed cadence over the control
protocol and appends one monitoring_data record per node per tick,
regardless of what experiments are doing: these records are the validation
data the execution path never writes. A failed poll is recorded as a
poll_gap run_event rather than silently skipped.

Availability is computed from the records by step-function integration
(zero-order hold: a sampled state holds until the next sample), so
availability + downtime fraction is exactly 1 for any window.
"""

from .protocol import ControlClient, ControlError
from .store import QueryFilter, Store


class MonitorError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


class Monitor:
    def __init__(self, control: ControlClient, store: Store,
                 cadence_s: int = 60):
        if cadence_s < 1:
            raise ValueError("cadence must be >= 1 second")
        self.control = control
        self.store = store
        self.cadence_s = cadence_s
        self._task = None

    def attach(self, engine, start: int | None = None):
        """Register the periodic poll on the engine's virtual clock."""
        self._task = engine.every(self.cadence_s, self.poll_all, start=start)
        return self._task

    def detach(self):
        if self._task is not None:
            self._task.cancel()
            self._task = None

    def poll_all(self) -> list[dict]:
        """One monitoring record per inventory node; down nodes yield
        up=false with empty details."""
        try:
            inventory = self.control.inventory()["nodes"]
        except ControlError as err:
            self.store.append("run_event",
                              {"event": "poll_gap", "error": err.code,
                               "message": str(err)})
            return []
        records = []
        for node in inventory:
            node_id = node["id"]
            try:
                snapshot = self.control.poll(node_id)
            except ControlError as err:
                self.store.append("run_event",
                                  {"event": "poll_gap", "node": node_id,
                                   "error": err.code, "message": str(err)})
                continue
            payload = {
                "up": snapshot["up"],
                "building": snapshot["building"],
                "reboots": snapshot["reboots"],
                "interfaces": snapshot["interfaces"],
                "routing_table_size": snapshot["routing_table_size"],
                "links": snapshot["links"],
            }
            self.store.append("monitoring_data", payload, node_id=node_id)
            records.append(payload)
        return records


def step_uptime(samples: list[tuple[int, bool]], t_start: int, t_end: int) -> int:
    """Integrate up-seconds over [t_start, t_end) from (timestamp, up)
    samples; each state holds until the next sample, the first state is
    extended back to t_start."""
    if t_end <= t_start:
        raise MonitorError("EMPTY_WINDOW", "window must have positive length")
    if not samples:
        raise MonitorError("NO_DATA", "no samples in window")
    samples = sorted(samples)
    up_seconds = 0
    prev_ts, prev_up = t_start, samples[0][1]
    for ts, up in samples:
        ts = min(max(ts, t_start), t_end)
        if prev_up:
            up_seconds += ts - prev_ts
        prev_ts, prev_up = ts, up
    if prev_up:
        up_seconds += t_end - prev_ts
    return up_seconds


def uptime_downtime(store: Store, node_id: str, t_start: int,
                    t_end: int) -> tuple[int, int]:
    """(up seconds, down seconds) for one node over [t_start, t_end);
    conservation is exact: the two always sum to the window length."""
    records = store.query(QueryFilter(kinds={"monitoring_data"},
                                      node_id=node_id,
                                      t_min=t_start, t_max=t_end))
    samples = [(r.timestamp, bool(r.payload.get("up"))) for r in records]
    up = step_uptime(samples, t_start, t_end)
    return up, (t_end - t_start) - up


def availability(store: Store, node_id: str, t_start: int, t_end: int) -> float:
    """Up-time fraction in [0, 1] for one node over [t_start, t_end)."""
    up, _ = uptime_downtime(store, node_id, t_start, t_end)
    return up / (t_end - t_start)


def downtime_fraction(store: Store, node_id: str, t_start: int,
                      t_end: int) -> float:
    return 1.0 - availability(store, node_id, t_start, t_end)
