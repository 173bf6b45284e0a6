"""Deterministic event-driven simulation of a wireless multi-hop node fleet.

Nodes live in buildings, hold one wireless interface with a channel setting
and packet counters, and are joined by links with fixed true delivery ratios
(df forward, dr reverse). Link quality is observed the way a real deployment
would: broadcast probe windows estimate df/dr, and the expected transmission
count is ETX = 1/(df*dr) of the estimates (infinite when the product is 0).

Node churn is an alternating renewal process: exponential up-times, and
down-times drawn exponentially but capped by the watchdog reboot delay. A
reboot restores default configuration and resets packet counters, which is
itself an observable event.

Everything is a pure function of (config, seed, call sequence): per-node
churn, per-link probes, and per-action traffic all draw from independent
hash-derived substreams, so replaying a scenario is bit-identical and
reordering unrelated work does not perturb results.
"""

import heapq
import math
import random
from dataclasses import dataclass, field

from . import actions
from .util import derive_seed

DEFAULT_CHANNEL = 6
PROBE_WINDOW = 10          # default probes per link measurement
PACKET_BITS = 8 * 1500     # throughput proxy: full MTU frames
HOP_MS = 1.5               # latency proxy per hop for ping round-trips


class FleetError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


# --- configuration -----------------------------------------------------------

@dataclass
class ChurnParams:
    mean_up_s: float
    mean_down_s: float


@dataclass
class FleetConfig:
    node_count: int
    buildings: dict[str, str] = field(default_factory=dict)
    links: dict[tuple[str, str], tuple[float, float]] = field(default_factory=dict)
    churn: ChurnParams | None = None
    watchdog_s: int | None = 3600
    seed: int = 0

    def validate(self):
        if self.node_count < 1:
            raise FleetError("BAD_CONFIG", "node count must be >= 1")
        for pair, (df, dr) in self.links.items():
            if not (0.0 <= df <= 1.0 and 0.0 <= dr <= 1.0):
                raise FleetError("BAD_CONFIG",
                                 f"delivery ratios for {pair} must be in [0, 1]")
        if self.churn is not None:
            if self.churn.mean_up_s <= 0 or self.churn.mean_down_s <= 0:
                raise FleetError("BAD_CONFIG", "churn means must be positive")
        if self.watchdog_s is not None and self.watchdog_s <= 0:
            raise FleetError("BAD_CONFIG", "watchdog delay must be positive")

    @classmethod
    def generated(cls, node_count: int, *, buildings: int = 4, seed: int = 0,
                  availability: float | None = None, mean_up_h: float = 48.0,
                  watchdog_s: int | None = 3600,
                  extra_link_prob: float = 0.35) -> "FleetConfig":
        """Campus-style topology: contiguous building blocks, chains plus a
        few shortcuts inside each building, bridges between neighbors."""
        rng = random.Random(derive_seed(seed, "topology"))
        ids = [f"n{i + 1}" for i in range(node_count)]
        building_names = [f"b{k + 1}" for k in range(max(1, buildings))]
        assignment = {}
        block = math.ceil(node_count / len(building_names))
        for i, node_id in enumerate(ids):
            assignment[node_id] = building_names[min(i // block,
                                                     len(building_names) - 1)]

        def quality():
            return (round(rng.uniform(0.75, 1.0), 3),
                    round(rng.uniform(0.75, 1.0), 3))

        links: dict[tuple[str, str], tuple[float, float]] = {}
        by_building: dict[str, list[str]] = {}
        for node_id in ids:
            by_building.setdefault(assignment[node_id], []).append(node_id)
        for members in by_building.values():
            for a, b in zip(members, members[1:]):
                links[(a, b)] = quality()
            for i, a in enumerate(members):
                for b in members[i + 2:i + 5]:
                    if rng.random() < extra_link_prob:
                        links.setdefault((a, b), quality())
        blocks = [by_building[b] for b in building_names if b in by_building]
        for left, right in zip(blocks, blocks[1:]):
            links.setdefault((left[-1], right[0]), quality())
            if len(left) > 1 and len(right) > 1 and rng.random() < 0.8:
                links.setdefault((rng.choice(left), rng.choice(right)), quality())

        churn = None
        if availability is not None:
            churn = churn_for_availability(availability,
                                           mean_up_s=mean_up_h * 3600.0,
                                           watchdog_s=watchdog_s)
        return cls(node_count=node_count, buildings=assignment, links=links,
                   churn=churn, watchdog_s=watchdog_s, seed=seed)


def effective_mean_down(mean_down_s: float, watchdog_s: int | None) -> float:
    """E[min(Exp(mean_down), watchdog)] = mu * (1 - exp(-W/mu))."""
    if watchdog_s is None:
        return mean_down_s
    return mean_down_s * (1.0 - math.exp(-watchdog_s / mean_down_s))


def long_run_availability(churn: ChurnParams, watchdog_s: int | None) -> float:
    down = effective_mean_down(churn.mean_down_s, watchdog_s)
    return churn.mean_up_s / (churn.mean_up_s + down)


def churn_for_availability(availability: float, *, mean_up_s: float = 48 * 3600.0,
                           watchdog_s: int | None = 3600) -> ChurnParams:
    """Solve for the raw mean down-time that yields the target long-run
    availability under the watchdog cap (bisection; the cap bounds the
    effective mean, so targets at or above it are unreachable)."""
    if not 0.0 < availability < 1.0:
        raise FleetError("BAD_CONFIG", "availability must be in (0, 1)")
    target = mean_up_s * (1.0 - availability) / availability
    if watchdog_s is None:
        return ChurnParams(mean_up_s, target)
    if target >= watchdog_s:
        raise FleetError(
            "BAD_CONFIG",
            f"watchdog cap {watchdog_s}s makes mean down-time {target:.0f}s "
            f"unreachable; raise watchdog_s or mean_up_s")
    lo, hi = 1e-6, float(watchdog_s)
    while effective_mean_down(hi, watchdog_s) < target:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if effective_mean_down(mid, watchdog_s) < target:
            lo = mid
        else:
            hi = mid
    return ChurnParams(mean_up_s, 0.5 * (lo + hi))


# --- link metric ---------------------------------------------------------------

def etx(df: float, dr: float) -> float:
    """Expected transmission count 1/(df*dr); inf when the product is 0."""
    if not (0.0 <= df <= 1.0 and 0.0 <= dr <= 1.0):
        raise ValueError("delivery ratios must be in [0, 1]")
    product = df * dr
    if product == 0.0:
        return math.inf
    return 1.0 / product


@dataclass
class LinkState:
    peer: str
    df: float
    dr: float
    etx: float

    def to_doc(self) -> dict:
        return {"peer": self.peer, "df": self.df, "dr": self.dr,
                "etx": None if math.isinf(self.etx) else self.etx}


@dataclass
class ActionResult:
    node_id: str
    command: str
    status: str                      # ok | failed | timeout | node_down
    payload: dict[str, list[float]]
    span_s: int

    def to_doc(self) -> dict:
        return {"node": self.node_id, "command": self.command,
                "status": self.status, "payload": self.payload,
                "span_s": self.span_s}


class _NodeSim:
    __slots__ = ("id", "idx", "building", "up", "channel", "traffic", "temp",
                 "tx", "rx", "uptime_s", "downtime_s", "last_edge", "reboots",
                 "next_transition", "gen", "rng")

    def __init__(self, node_id: str, idx: int, building: str, rng: random.Random):
        self.id = node_id
        self.idx = idx
        self.building = building
        self.up = True
        self.channel = DEFAULT_CHANNEL
        self.traffic = False
        self.temp = False
        self.tx = 0
        self.rx = 0
        self.uptime_s = 0
        self.downtime_s = 0
        self.last_edge = 0
        self.reboots = 0
        self.next_transition: int | None = None
        self.gen = 0
        self.rng = rng


class Fleet:
    """One simulated deployment. All access is serialized by the control
    channel in front of it; the class itself assumes single-threaded use."""

    def __init__(self, config: FleetConfig):
        config.validate()
        self.config = config
        self.seed = config.seed
        self.now = 0
        self._exec_counter = 0
        self._pending_events: list[dict] = []

        ids = [f"n{i + 1}" for i in range(config.node_count)]
        if config.buildings:
            unknown = set(config.buildings) - set(ids)
            if unknown:
                raise FleetError("BAD_CONFIG",
                                 f"buildings map names unknown nodes: {sorted(unknown)}")
        self.nodes: dict[str, _NodeSim] = {}
        for i, node_id in enumerate(ids):
            building = config.buildings.get(node_id, "b1")
            self.nodes[node_id] = _NodeSim(
                node_id, i, building,
                random.Random(derive_seed(config.seed, "churn", node_id)))
        self.order = ids

        # directed link quality: quality[(a, b)] = delivery ratio a -> b
        self.quality: dict[tuple[str, str], float] = {}
        self.neighbors: dict[str, list[str]] = {n: [] for n in ids}
        for (a, b), (df, dr) in config.links.items():
            if a not in self.nodes or b not in self.nodes:
                raise FleetError("BAD_CONFIG", f"link {a}-{b} names unknown node")
            if a == b:
                raise FleetError("BAD_CONFIG", f"self-link on {a}")
            self.quality[(a, b)] = df
            self.quality[(b, a)] = dr
            if b not in self.neighbors[a]:
                self.neighbors[a].append(b)
            if a not in self.neighbors[b]:
                self.neighbors[b].append(a)
        for node_id in ids:
            self.neighbors[node_id].sort(key=lambda n: self.nodes[n].idx)

        self._transitions: list[tuple[int, int, int]] = []   # (time, idx, gen)
        if config.churn is not None:
            for node_id in ids:
                node = self.nodes[node_id]
                node.next_transition = self._draw_up(node)
                heapq.heappush(self._transitions,
                               (node.next_transition, node.idx, node.gen))

    # -- churn ---------------------------------------------------------------

    def _draw_up(self, node: _NodeSim) -> int:
        length = node.rng.expovariate(1.0 / self.config.churn.mean_up_s)
        return self.now + max(1, round(length))

    def _draw_down(self, node: _NodeSim) -> int:
        length = node.rng.expovariate(1.0 / self.config.churn.mean_down_s)
        if self.config.watchdog_s is not None:
            length = min(length, float(self.config.watchdog_s))
        return self.now + max(1, round(length))

    def _flip(self, node: _NodeSim, at: int) -> dict:
        if node.up:
            node.uptime_s += at - node.last_edge
            node.up = False
            event = {"time": at, "node": node.id, "event": "down"}
        else:
            node.downtime_s += max(0, at - node.last_edge)
            node.up = True
            node.reboots += 1
            # watchdog reboot: default config, counters start over
            node.channel = DEFAULT_CHANNEL
            node.traffic = False
            node.temp = False
            node.tx = 0
            node.rx = 0
            event = {"time": at, "node": node.id, "event": "up", "reset": True}
        node.last_edge = at
        return event

    def advance(self, seconds: int) -> list[dict]:
        """Move the virtual clock, processing up/down transitions in time
        order. Returns the churn events inside the window."""
        if seconds < 0:
            raise FleetError("BAD_ADVANCE", "cannot advance backwards")
        target = self.now + seconds
        events = [e for e in self._pending_events if e["time"] <= target]
        self._pending_events = [e for e in self._pending_events
                                if e["time"] > target]
        while self._transitions and self._transitions[0][0] <= target:
            at, idx, gen = heapq.heappop(self._transitions)
            node = self.nodes[self.order[idx]]
            if gen != node.gen or node.next_transition != at:
                continue        # superseded by an eager reboot
            self.now = max(self.now, at)
            events.append(self._flip(node, at))
            node.gen += 1
            node.next_transition = (self._draw_down(node) if not node.up
                                    else self._draw_up(node))
            heapq.heappush(self._transitions,
                           (node.next_transition, node.idx, node.gen))
        self.now = target
        events.sort(key=lambda e: (e["time"], self.nodes[e["node"]].idx))
        return events

    def _reboot_early(self, node: _NodeSim, at: int):
        # an executor waited for the node: bring the reboot forward, keep the
        # renewal process on its own schedule
        self._pending_events.append(self._flip(node, at))
        node.gen += 1
        saved_now = self.now
        self.now = at
        node.next_transition = self._draw_up(node)
        self.now = saved_now
        heapq.heappush(self._transitions,
                       (node.next_transition, node.idx, node.gen))

    # -- observation -----------------------------------------------------------

    def inventory(self) -> list[dict]:
        return [{"id": n, "building": self.nodes[n].building,
                 "degree": len(self.neighbors[n])} for n in self.order]

    def uptime(self, node_id: str) -> tuple[int, int]:
        """(uptime seconds, downtime seconds) ground truth accumulators."""
        node = self._node(node_id)
        up = node.uptime_s
        down = node.downtime_s
        residual = max(0, self.now - node.last_edge)
        if node.up:
            up += residual
        else:
            down += residual
        return up, down

    def _node(self, node_id: str) -> _NodeSim:
        node = self.nodes.get(node_id)
        if node is None:
            raise FleetError("UNKNOWN_NODE", f"no such node {node_id!r}")
        return node

    def _estimate_pair(self, a: str, b: str, window: int) -> tuple[float, float]:
        rng = random.Random(derive_seed(self.seed, "probe", a, b, self.now))
        df_true = self.quality[(a, b)]
        dr_true = self.quality[(b, a)]
        df_hits = sum(1 for _ in range(window) if rng.random() < df_true)
        dr_hits = sum(1 for _ in range(window) if rng.random() < dr_true)
        return df_hits / window, dr_hits / window

    def measure_links(self, node_id: str, window: int = PROBE_WINDOW) -> list[LinkState]:
        """Probe-window link estimates from one node's perspective. Down
        endpoints yield no link."""
        if window < 1:
            raise FleetError("BAD_WINDOW", "window must be >= 1")
        node = self._node(node_id)
        if not node.up:
            return []
        links = []
        for peer in self.neighbors[node_id]:
            if not self.nodes[peer].up:
                continue
            df_est, dr_est = self._estimate_pair(node_id, peer, window)
            links.append(LinkState(peer, df_est, dr_est, etx(df_est, dr_est)))
        return links

    def poll(self, node_id: str) -> dict:
        """Monitoring snapshot of one node (config tuple, counters, links)."""
        node = self._node(node_id)
        uptime_s, downtime_s = self.uptime(node_id)
        doc = {
            "node": node.id,
            "building": node.building,
            "up": node.up,
            "uptime_s": uptime_s,
            "downtime_s": downtime_s,
            "reboots": node.reboots,
        }
        if node.up:
            doc.update({
                "channel": node.channel,
                "traffic": node.traffic,
                "temp": node.temp,
                "interfaces": [{"name": "wlan0", "channel": node.channel,
                                "tx": node.tx, "rx": node.rx}],
                "links": [l.to_doc() for l in self.measure_links(node_id)],
            })
            doc["routing_table_size"] = sum(
                1 for peer in self.neighbors[node_id] if self.nodes[peer].up)
        else:
            doc.update({"interfaces": [], "links": [], "routing_table_size": 0})
        return doc

    def baseline_config_tuple(self) -> list:
        return [DEFAULT_CHANNEL, False, False]

    # -- actions -----------------------------------------------------------------

    def execute(self, node_id: str, command: str, params: dict[str, str],
                timeout: int, stream_key: str | None = None) -> ActionResult:
        """Run one action. If the node is down, the executor waits for its
        watchdog reboot up to the action timeout (docs/control-protocol.md);
        a node that stays down yields status node_down."""
        spec = actions.REGISTRY.get(command)
        if spec is None:
            raise FleetError("UNKNOWN_COMMAND", f"no such command {command!r}")
        node = self._node(node_id)
        if timeout < 1:
            raise FleetError("BAD_TIMEOUT", "timeout must be positive")
        self._exec_counter += 1

        wait = 0
        if not node.up:
            returns_at = node.next_transition
            if returns_at is None or returns_at - self.now > timeout:
                return ActionResult(node_id, command, "node_down", {}, timeout)
            wait = returns_at - self.now
            self._reboot_early(node, returns_at)

        params = actions.effective_params(command, params)
        if actions.check_params(command, params):
            return ActionResult(node_id, command, "failed", {}, wait)
        key = stream_key or f"{node_id}|{command}|{self.now}|{self._exec_counter}"
        rng = random.Random(derive_seed(self.seed, "act", key))
        handler = getattr(self, f"_cmd_{command}")
        status, payload, duration = handler(node, params, rng)
        if status == "ok" and wait + duration > timeout:
            return ActionResult(node_id, command, "timeout", {}, timeout)
        span = wait + duration if status == "ok" else wait
        return ActionResult(node_id, command, status, payload, span)

    def _cmd_noop(self, node, params, rng):
        return "ok", {"alive": [1.0]}, 0

    def _cmd_reset_config(self, node, params, rng):
        node.channel = DEFAULT_CHANNEL
        node.traffic = False
        node.temp = False
        return "ok", {}, 0

    def _cmd_set_channel(self, node, params, rng):
        channel = int(params["channel"])
        if not 1 <= channel <= 14:
            return "failed", {}, 0
        node.channel = channel
        return "ok", {"channel": [float(channel)]}, 0

    def _cmd_stop_traffic(self, node, params, rng):
        node.traffic = False
        return "ok", {}, 0

    def _path(self, src: str, dst: str) -> list[str] | None:
        # shortest hop path over up nodes, deterministic neighbor order
        if src == dst:
            return [src]
        seen = {src}
        frontier = [src]
        parent: dict[str, str] = {}
        while frontier:
            nxt = []
            for a in frontier:
                for b in self.neighbors[a]:
                    if b in seen or not self.nodes[b].up:
                        continue
                    seen.add(b)
                    parent[b] = a
                    if b == dst:
                        path = [dst]
                        while path[-1] != src:
                            path.append(parent[path[-1]])
                        return path[::-1]
                    nxt.append(b)
            frontier = nxt
        return None

    def _cmd_start_traffic(self, node, params, rng):
        dest = params["dest"]
        packets = int(params["packets"])
        duration = int(params["duration"])
        if dest not in self.nodes or packets < 1:
            return "failed", {}, 0
        node.traffic = True
        node.temp = True
        if dest == node.id:
            # loopback: group-wide traffic actions include the sink itself
            payload = self._loopback(packets)
        else:
            path = self._path(node.id, dest) if self.nodes[dest].up else None
            payload = self._send_packets(path, packets, rng, round_trip=False)
        payload["throughput_bps"] = [payload["delivered"][0] * PACKET_BITS
                                     / max(1, duration)]
        return "ok", payload, duration

    def _cmd_ping_flood(self, node, params, rng):
        dest = params["dest"]
        count = int(params["count"])
        if dest not in self.nodes or count < 1:
            return "failed", {}, 0
        node.temp = True
        if dest == node.id:
            payload = self._loopback(count)
            payload["rtt_ms"] = [0.0]
            return "ok", payload, max(1, count // 10)
        path = self._path(node.id, dest) if self.nodes[dest].up else None
        payload = self._send_packets(path, count, rng, round_trip=True)
        hops = len(path) - 1 if path else 0
        payload["rtt_ms"] = [hops * 2 * HOP_MS] if payload["delivered"][0] else []
        return "ok", payload, max(1, count // 10)

    @staticmethod
    def _loopback(count: int) -> dict:
        return {"sent": [float(count)], "delivered": [float(count)],
                "delivery_ratio": [1.0], "hop_count": [0.0]}

    def _send_packets(self, path: list[str] | None, count: int,
                      rng: random.Random, round_trip: bool) -> dict:
        src = None if path is None else self.nodes[path[0]]
        if path is None or len(path) < 2:
            # unreachable destination: traffic transmitted, nothing arrives
            if src is not None:
                src.tx += count
            return {"sent": [float(count)], "delivered": [0.0],
                    "delivery_ratio": [0.0], "hop_count": []}
        hops = list(zip(path, path[1:]))
        if round_trip:
            hops = hops + [(b, a) for a, b in reversed(hops)]
        delivered = 0
        self.nodes[path[0]].tx += count
        for _ in range(count):
            alive = True
            for hop_index, (a, b) in enumerate(hops):
                if rng.random() >= self.quality[(a, b)]:
                    alive = False
                    break
                receiver = self.nodes[b]
                receiver.rx += 1
                if hop_index < len(hops) - 1:
                    receiver.tx += 1
            if alive:
                delivered += 1
        return {
            "sent": [float(count)],
            "delivered": [float(delivered)],
            "delivery_ratio": [delivered / count],
            "hop_count": [float(len(path) - 1)],
        }


def spawn(config: FleetConfig) -> Fleet:
    """Create a fleet: clock at zero, every node up, links configured."""
    return Fleet(config)
