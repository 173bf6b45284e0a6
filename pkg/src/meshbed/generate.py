"""Seeded generators for descriptions and workloads.

Used by the headless scenario runner (``meshbed simulate``) to build
year-scale workloads, and by the test suite as the random-description source
for round-trip and scheduling properties. Everything is driven by an explicit
random.Random so output is reproducible.
"""

import random

from . import actions
from .descript import (
    Action,
    DynamicSelection,
    ExperimentDescription,
    InventoryNode,
    MetricSpec,
    NodeGroup,
    Predicate,
    StaticSelection,
    TrafficSpec,
)

TOPICS = [
    "application_layer", "channel_assignment", "localization", "mac",
    "mobility", "routing", "security", "service_placement", "tracking",
    "transport_layer", "wsn",
]

_WORDS = [
    "channel", "assignment", "routing", "baseline", "flood", "ad-hoc",
    "Kanalzuweisung", "mesh", "Netzwerk", "probe", "link", "quality",
    "multi-hop", "gateway", "Verfügbarkeit", "survey",
]

_METRIC_NAMES = ["delivery_ratio", "hop_count", "throughput_bps", "rtt_ms",
                 "alive", "loss_rate"]

_UNITS = ["ratio", "hops", "bit/s", "ms", "", "packets", "per hop",
          'frames "raw"', "m\\s"]


def _text(rng: random.Random, max_words=4) -> str:
    return " ".join(rng.choice(_WORDS) for _ in range(rng.randint(1, max_words)))


def _weird_value(rng: random.Random) -> str:
    # stresses quoting in the canonical form
    pool = ["plain", "with space", 'has "quotes"', "back\\slash", "", "täst",
            "a=b", "10", "0.5"]
    return rng.choice(pool)


def random_description(rng: random.Random, inventory: list[InventoryNode],
                       *, index: int = 0, max_nodes: int | None = None,
                       node_budget: int | None = None) -> ExperimentDescription:
    """One valid-by-construction description against the given inventory."""
    ids = [n.id for n in inventory]
    max_nodes = min(max_nodes or len(ids), len(ids))
    buildings = sorted({n.building for n in inventory if n.building})

    budget = node_budget if node_budget else rng.randint(1, max_nodes)
    budget = max(1, min(budget, max_nodes))
    pool = rng.sample(ids, budget)
    n_groups = rng.randint(1, min(3, budget))
    cuts = sorted(rng.sample(range(1, budget), n_groups - 1)) if n_groups > 1 else []
    bounds = [0] + cuts + [budget]
    plans = []          # (name, role, members, wants_dynamic)
    for gi in range(n_groups):
        plans.append((f"g{gi + 1}",
                      rng.choice(["client", "server", "servent"]),
                      pool[bounds[gi]:bounds[gi + 1]],
                      rng.random() >= 0.75))

    # dynamic counts must stay satisfiable under the scheduler's binding
    # order (statics, then attribute predicates first-fit, then randoms),
    # so mirror that accounting while choosing them
    static_taken = {node for _, _, members, dynamic in plans
                    for node in members if not dynamic}
    available = [n for n in inventory if n.id not in static_taken]
    selections: dict[str, StaticSelection | DynamicSelection] = {}
    random_plans = []
    for name, role, members, dynamic in plans:
        if not dynamic:
            selections[name] = StaticSelection(members)
            continue
        kind = rng.random()
        if kind < 0.3 and buildings:
            building = rng.choice(buildings)
            predicate = Predicate("building", building=building)
        elif kind < 0.45:
            predicate = Predicate("degree", min_degree=0)
        else:
            predicate = Predicate("random")
        if predicate.kind == "random":
            random_plans.append((name, members))
            continue
        candidates = [n for n in available if predicate.matches(n)]
        if not candidates:
            random_plans.append((name, members))
            continue
        count = rng.randint(1, min(len(members), len(candidates)))
        selections[name] = DynamicSelection(count, predicate)
        taken = {n.id for n in candidates[:count]}
        available = [n for n in available if n.id not in taken]
    for name, members in random_plans:
        # each dynamic count is capped by its own (disjoint) member segment,
        # so the remaining pool always covers the groups still pending
        count = rng.randint(1, min(len(members), len(available)))
        selections[name] = DynamicSelection(count, Predicate("random"))
        available = available[count:]

    groups = [NodeGroup(name, role, selections[name])
              for name, role, members, _ in plans]

    duration_limit = rng.choice([1800, 3600, 7200, 14400, 36000, 72000])
    acts: list[Action] = []
    for _ in range(rng.randint(1, 4)):
        target = rng.choice(groups).name
        command = rng.choice(actions.schedulable_names())
        params: dict[str, str] = {}
        spec = actions.REGISTRY[command]
        if "dest" in spec.params:
            params["dest"] = rng.choice(ids)
        if command == "start_traffic":
            params["pattern"] = rng.choice(["cbr", "burst"])
            params["packets"] = str(rng.randint(10, 200))
            params["duration"] = str(rng.randint(1, 30))
        if command == "set_channel":
            params["channel"] = str(rng.randint(1, 14))
        if command == "ping_flood":
            params["count"] = str(rng.randint(1, 50))
        acts.append(Action(
            target=target,
            command=command,
            params=params,
            start_offset=rng.randint(0, duration_limit // 2),
            timeout=rng.randint(30, 600),
        ))

    metric_count = rng.randint(0, 3)
    names = rng.sample(_METRIC_NAMES, metric_count)
    metrics = [MetricSpec(name=n, unit=rng.choice(_UNITS),
                          aggregation=rng.choice(["mean_ci", "five_number",
                                                  "histogram"]))
               for n in names]

    if rng.random() < 0.5:
        traffic = TrafficSpec()
    else:
        params = {}
        if rng.random() < 0.5:
            params["rate"] = _weird_value(rng)
        traffic = TrafficSpec(rng.choice(["cbr", "burst"]), params)

    cleanup = []
    if rng.random() < 0.6:
        cleanup.append(Action(target=groups[0].name, command="stop_traffic",
                              timeout=rng.randint(10, 120)))

    return ExperimentDescription(
        id=f"exp-{index}-{rng.randrange(16**6):06x}",
        title=_text(rng),
        description=_text(rng, 8) if rng.random() < 0.7 else "",
        topic=rng.choice(TOPICS + ["other"]),
        replications=rng.randint(1, 5),
        duration_limit=duration_limit,
        groups=groups,
        actions=acts,
        traffic=traffic,
        metrics=metrics,
        cleanup=cleanup,
    )


def workload(rng: random.Random, inventory: list[InventoryNode], *,
             experiments: int, horizon_s: int,
             max_nodes: int | None = None, mean_nodes: float | None = None,
             max_replications: int = 3) -> list[tuple[int, ExperimentDescription]]:
    """A submission schedule: (submit time, description) sorted by time.

    mean_nodes skews node budgets low (geometric-ish) so large series stay
    tractable while still reaching max_nodes occasionally.
    """
    out = []
    for i in range(experiments):
        budget = None
        if mean_nodes is not None:
            budget = 1 + int(rng.expovariate(1.0 / mean_nodes))
        desc = random_description(rng, inventory, index=i, max_nodes=max_nodes,
                                  node_budget=budget)
        desc.replications = min(desc.replications, max_replications)
        out.append((rng.randrange(max(1, horizon_s)), desc))
    out.sort(key=lambda pair: pair[0])
    return out
