"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with `pytest tests/test_acceptance.py -v -s`).

Every expected value is pinned here; nothing is deferred to calibration.
Oracles are independent of the code under test: naive statistics
re-implementations, closed forms, and brute-force log scans.
"""

import math
import random
import subprocess
import sys
import threading
import time
from pathlib import Path

import numpy as np
import pytest
import scipy.stats

from meshbed import descript, generate
from meshbed.config import ServiceConfig
from meshbed.descript import parse, serialize
from meshbed.fleet import FleetConfig, churn_for_availability, spawn
from meshbed.monitor import Monitor, availability as monitor_availability
from meshbed.orchestrator import Engine, Orchestrator, required_replications
from meshbed.portal import PortalServer, ServiceStack
from meshbed.protocol import ControlClient
from meshbed.stats import histogram, normal_ppf, summarize
from meshbed.store import QueryFilter, Store

REPO = Path(__file__).resolve().parent.parent
YEAR_S = 365 * 24 * 3600


def report(name: str, ok: bool, detail: str = ""):
    line = f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f" ({detail})"
    print(line)
    assert ok, line


def test_dsl_round_trip_1000():
    rng = random.Random(1234)
    inventory = [descript.InventoryNode(f"n{i+1}", f"b{i % 4 + 1}", 3)
                 for i in range(135)]
    started = time.monotonic()
    for i in range(1000):
        desc = generate.random_description(rng, inventory, index=i)
        again = parse(serialize(desc))
        assert again == desc, f"round-trip mismatch at {i}"
    elapsed = time.monotonic() - started
    report("dsl-round-trip", elapsed < 10.0,
           f"1000 descriptions in {elapsed:.2f}s")


def test_scheduler_safety_table5_scale_year():
    started_wall = time.monotonic()
    # 99.5% availability with a 10-minute watchdog cap; prepare retries
    # (15 x 60 s) outlast any single down period, so churn never wedges
    # the queue
    config = FleetConfig.generated(135, buildings=4, seed=42,
                                   availability=0.995, mean_up_h=24,
                                   watchdog_s=600)
    service = ServiceConfig(fleet=config, seed=42, poll_cadence_s=60,
                            prepare_retries=15, retry_delay_s=60)
    stack = ServiceStack(service)      # monitor left detached: workload study
    stack.run_workload(experiments=661, horizon_s=YEAR_S, seed=42,
                       max_nodes=131, mean_nodes=28, max_replications=3)
    entries = stack.orchestrator.entries
    assert len(entries) == 661
    terminal = sum(1 for e in entries if e.terminal)
    done = sum(1 for e in entries if e.status == "done")

    # independent brute-force overlap scan over the run_event log alone
    run_docs = [r.payload for r in stack.store.query(
        QueryFilter(kinds={"run_event"}, payload_eq={"event": "run_done"}))]
    intervals = [(doc["started"], doc["ended"], frozenset(doc["nodes"]))
                 for doc in run_docs]
    violations = 0
    for i in range(len(intervals)):
        s1, e1, n1 = intervals[i]
        for j in range(i + 1, len(intervals)):
            s2, e2, n2 = intervals[j]
            if s1 < e2 and s2 < e1 and not n1.isdisjoint(n2):
                violations += 1
    elapsed = time.monotonic() - started_wall
    report("scheduler-safety",
           terminal == 661 and violations == 0 and elapsed < 300
           and done >= 0.9 * 661,
           f"{len(intervals)} runs, {done}/661 done, {violations} violations, "
           f"{elapsed:.1f}s wall")


def test_defined_state_fingerprints():
    config = FleetConfig.generated(135, buildings=4, seed=7)   # churn-free
    stack = ServiceStack(ServiceConfig(fleet=config, seed=7))
    rng = random.Random(99)
    entries = []
    for i in range(50):
        desc = generate.random_description(rng, stack.orchestrator.inventory,
                                           index=i, max_nodes=20)
        desc.replications = 5
        entries.append(stack.orchestrator.schedule(desc, start=0,
                                                   user="fp-study"))
    stack.engine.run()
    ok = True
    detail = ""
    for entry in entries:
        if entry.status != "done" or len(entry.runs) != 5:
            ok, detail = False, f"entry {entry.seq} {entry.status}"
            break
        prints = {r.prepare_fingerprint for r in entry.runs}
        base = stack.orchestrator.baseline(len(entry.resolved_nodes))
        if len(prints) != 1:
            ok, detail = False, f"entry {entry.seq} fingerprints differ"
            break
        if any(r.cleanup_fingerprint != base for r in entry.runs):
            ok, detail = False, f"entry {entry.seq} cleanup != baseline"
            break
    report("defined-state", ok,
           detail or "50 experiments x 5 replications, all fingerprints hold")


def _year_downtime_hours(availability_target: float, seed: int) -> float:
    churn = churn_for_availability(availability_target,
                                   mean_up_s=48 * 3600, watchdog_s=3600)
    config = FleetConfig(node_count=135, churn=churn, watchdog_s=3600,
                         seed=seed)
    f = spawn(config)
    f.advance(YEAR_S)
    downtimes = [f.uptime(n)[1] / 3600.0 for n in f.order]
    return sum(downtimes) / len(downtimes)


def test_availability_calibration():
    down98 = _year_downtime_hours(0.98, seed=11)
    down995 = _year_downtime_hours(0.995, seed=12)

    # monitor versus ground truth on a reduced deterministic configuration
    churn = churn_for_availability(0.98, mean_up_s=4 * 3600, watchdog_s=600)
    config = FleetConfig(node_count=20, churn=churn, watchdog_s=600, seed=13)
    f = spawn(config)
    control = ControlClient.local(f)
    store = Store(None, clock=lambda: f.now)
    engine = Engine(control, store)
    monitor = Monitor(control, store, cadence_s=300)
    monitor.attach(engine, start=0)
    horizon = 14 * 24 * 3600
    engine.run(until=horizon)
    worst = 0.0
    for node in f.order:
        truth = f.uptime(node)[0] / horizon
        measured = monitor_availability(store, node, 0, horizon)
        worst = max(worst, abs(measured - truth))

    ok = (131 <= down98 <= 219) and (33 <= down995 <= 55) and worst <= 0.005
    report("availability-calibration", ok,
           f"98%: {down98:.1f}h/node-year, 99.5%: {down995:.1f}h, "
           f"monitor worst error {worst * 100:.3f}pp")


def test_etx_convergence():
    pairs = ((1.0, 1.0), (0.8, 0.9), (0.5, 0.5))
    ok = True
    details = []
    for df, dr in pairs:
        truth = 1.0 / (df * dr)
        estimates = []
        for seed in range(30):
            f = spawn(FleetConfig(node_count=2,
                                  links={("n1", "n2"): (df, dr)}, seed=seed))
            links = f.measure_links("n1", window=100)
            assert len(links) == 1
            link = links[0]
            # reported etx is exactly 1/(df_est * dr_est)
            assert link.etx == 1.0 / (link.df * link.dr)
            estimates.append(link.etx)
        mean = sum(estimates) / len(estimates)
        rel = abs(mean - truth) / truth
        details.append(f"({df},{dr}): {mean:.4f} vs {truth:.4f} ({rel*100:.2f}%)")
        ok = ok and rel < 0.05
    report("etx-convergence", ok, "; ".join(details))


def _naive_summary(values, confidence):
    arr = np.asarray(values, dtype=float)
    n = arr.size
    mean = float(arr.mean())
    std = float(arr.std(ddof=1)) if n > 1 else 0.0
    half = (scipy.stats.t.ppf((1 + confidence) / 2, n - 1) * std / math.sqrt(n)
            if n > 1 else 0.0)
    data = sorted(values)

    def med(xs):
        return (xs[(len(xs) - 1) // 2] + xs[len(xs) // 2]) / 2

    half_len = (n + 1) // 2
    five = (data[0], med(data[:half_len]), med(data), med(data[-half_len:]),
            data[-1])
    notch = 1.57 * (five[3] - five[1]) / math.sqrt(n)
    return mean, std, mean - half, mean + half, five, notch


def _naive_histogram(values, width):
    if not values:
        return []
    top = int(max(values) // width)
    while max(values) >= (top + 1) * width:
        top += 1
    while max(values) < top * width:
        top -= 1
    bins = []
    for k in range(0, top + 1):
        count = sum(1 for v in values if k * width <= v < (k + 1) * width)
        bins.append((k * width, count))
    return bins


def test_statistics_oracle():
    rng = random.Random(512)

    for trial in range(1000):
        n = rng.randint(1, 80)
        values = [rng.gauss(rng.uniform(-100, 100), 10 ** rng.randint(-2, 3))
                  for _ in range(n)]
        confidence = rng.choice([0.8, 0.9, 0.95, 0.99])
        # 1e-9 relative on each quantity, with the data magnitude as the
        # absolute floor (a CI bound crossing zero has no relative scale:
        # even scipy differs from exact truth by more than 1e-9 of it)
        scale = max(abs(v) for v in values) or 1.0

        def close(a, b):
            return math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-9 * scale)

        s = summarize(values, confidence)
        mean, std, lo, hi, five, notch = _naive_summary(values, confidence)
        assert close(s.mean, mean) and close(s.stddev, std)
        assert close((s.ci_high - s.ci_low) / 2, (hi - lo) / 2)
        assert close(s.ci_low, lo) and close(s.ci_high, hi)
        for got, want in zip((s.minimum, s.q1, s.median, s.q3, s.maximum),
                             five):
            assert got == want      # selections and two-point midpoints: exact
        assert close(s.notch, notch)

        positives = [abs(v) for v in values]
        width = rng.choice([0.5, 1.0, 2.5, 10.0])
        assert histogram(positives, width) == _naive_histogram(positives,
                                                               width)

    worked = summarize([8, 10, 12], 0.95)
    ok = (abs(worked.ci_low - 5.032) < 1e-3
          and abs(worked.ci_high - 14.968) < 1e-3)
    report("statistics-oracle", ok,
           f"1000 datasets at 1e-9; CI example ({worked.ci_low:.3f}, "
           f"{worked.ci_high:.3f})")


def test_replication_count_formula():
    n = required_replications(100, 10, 0.95, 0.05)
    z = normal_ppf(0.975)
    planned_half_width = z * 10 / math.sqrt(16)

    rng = random.Random(77)
    trials = 1000
    covered = 0
    sample_hw_ok = 0
    for _ in range(trials):
        data = [rng.gauss(100, 10) for _ in range(16)]
        mean = sum(data) / 16
        if abs(mean - 100) <= planned_half_width:
            covered += 1
        s = math.sqrt(sum((v - mean) ** 2 for v in data) / 15)
        if z * s / 4 <= 5:
            sample_hw_ok += 1
    coverage = covered / trials
    ok = (n == 16 and planned_half_width <= 5 and coverage >= 0.85)
    report("replication-count", ok,
           f"n={n}, planned half-width {planned_half_width:.3f}<=5 in all "
           f"trials, coverage {coverage:.3f}; sample-stddev half-width<=5 in "
           f"{sample_hw_ok / trials:.2f} of trials (reported, non-gating)")


def _seed_table5_store(store):
    # 661 experiments: routing rows carry Table 6's (362, 4067 h); the
    # remaining 299 include the 875 h maximum; node counts average 99
    # exactly with a single 131-node maximum
    hours = [12] * 85 + [11] * 277
    assert len(hours) == 362 and sum(hours) == 4067
    runtimes = [float(h) for h in hours] + [875.0] + [10.0] * 298
    nodes = [131, 67] + [99] * 659
    assert sum(nodes) == 661 * 99 and max(nodes) == 131
    assert len(runtimes) == 661 and max(runtimes) == 875.0
    for i in range(661):
        store.append("run_event", {
            "event": "experiment_done",
            "experiment_id": f"e{i}",
            "user": f"user{i % 30}",
            "topic": "routing" if i < 362 else "other",
            "runtime_h": runtimes[i],
            "nodes_used": nodes[i],
            "status": "done",
        })


def test_usage_report_reproduction():
    from meshbed.evaluation import usage_report

    store = Store(None, clock=lambda: 100)
    _seed_table5_store(store)
    rep = usage_report(store.query(), (0, 1000))
    count, total = rep.topics["routing"]
    ok = (rep.experiments == 661 and rep.users == 30
          and rep.max_runtime_h == 875.0 and rep.max_nodes == 131
          and rep.mean_nodes == 99.0
          and abs(rep.experiments_per_user - 22.03) <= 0.01
          and (count, total) == (362, 4067.0))

    # the same numbers through the portal endpoint
    config = ServiceConfig(fleet=FleetConfig(node_count=1), seed=0)
    stack = ServiceStack(config)
    _seed_table5_store(stack.store)
    server = PortalServer(stack, port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        import requests
        doc = requests.get(server.endpoint
                           + "/reports/usage?period=0:1000").json()
    finally:
        server.shutdown()
        server.server_close()
    ok = ok and doc["experiments"] == 661 and doc["users"] == 30
    report("usage-report", ok,
           f"experiments={rep.experiments} users={rep.users} "
           f"max_rt={rep.max_runtime_h} max_nodes={rep.max_nodes} "
           f"mean_nodes={rep.mean_nodes} per_user="
           f"{rep.experiments_per_user:.4f} routing=({count},{total})")


def test_end_to_end_determinism(tmp_path):
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / f"sim-{tag}.ndjson"
        proc = subprocess.run(
            [sys.executable, "-m", "meshbed.cli", "simulate", "--seed", "42",
             "--config", str(REPO / "configs" / "demo.cfg"),
             "--out", str(out)],
            capture_output=True, text=True, timeout=300)
        assert proc.returncode == 0, proc.stderr
        outs.append(out.read_bytes())
    ok = outs[0] == outs[1] and len(outs[0]) > 0
    report("end-to-end-determinism", ok,
           f"two runs, {len(outs[0])} bytes each, byte-identical={ok}")
