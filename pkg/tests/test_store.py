import os
import random
import subprocess
import sys
import threading

import pytest

from meshbed.store import KINDS, QueryFilter, Record, Store, StoreError, read_export


@pytest.fixture
def store(tmp_path):
    s = Store(str(tmp_path / "data.log"), clock=lambda: 1000)
    yield s
    s.close()


def test_first_append_gets_id_one(store):
    assert store.append("run_event", {"event": "x"}) == 1


def test_ids_strictly_increase(store):
    ids = [store.append("run_event", {"i": i}) for i in range(50)]
    assert ids == sorted(ids)
    assert len(set(ids)) == 50


def test_concurrent_appends_unique_and_retrievable(tmp_path):
    s = Store(str(tmp_path / "c.log"))
    results = []
    lock = threading.Lock()

    def worker(k):
        for i in range(100):
            rid = s.append("run_event", {"worker": k, "i": i})
            with lock:
                results.append(rid)

    threads = [threading.Thread(target=worker, args=(k,)) for k in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(set(results)) == 400
    assert len(s.query()) == 400
    s.close()


def test_experiment_data_requires_run_id(store):
    with pytest.raises(StoreError) as err:
        store.append("experiment_data", {"v": 1})
    assert err.value.code == "MISSING_RUN_ID"
    store.append("experiment_data", {"v": 1}, run_id="r1")


def test_monitoring_data_requires_node_id(store):
    with pytest.raises(StoreError) as err:
        store.append("monitoring_data", {"up": True})
    assert err.value.code == "MISSING_NODE_ID"


def test_unknown_kind_rejected(store):
    with pytest.raises(StoreError):
        store.append("blog_post", {})


def test_query_by_kind_and_node(store):
    store.append("monitoring_data", {"up": True}, node_id="n7")
    store.append("monitoring_data", {"up": False}, node_id="n2")
    store.append("run_event", {"event": "phase"}, run_id="r1")
    store.append("monitoring_data", {"up": True}, node_id="n7")
    got = store.query(QueryFilter(kinds={"monitoring_data"}, node_id="n7"))
    assert [r.id for r in got] == [1, 4]
    assert all(r.node_id == "n7" for r in got)


def test_query_structural_relationship(store):
    store.append("experiment_data", {"v": 1}, run_id="r1", node_id="n1")
    store.append("monitoring_data", {"up": True}, node_id="n1")
    store.append("run_event", {"event": "phase"}, run_id="r1")
    store.append("experiment_data", {"v": 2}, run_id="r2", node_id="n1")
    got = store.query(QueryFilter(
        kinds={"experiment_data", "monitoring_data"}, run_id="r1"))
    assert [r.id for r in got] == [1]


def test_empty_filter_returns_everything_in_id_order(store):
    for i in range(10):
        store.append("run_event", {"i": i})
    got = store.query()
    assert [r.id for r in got] == list(range(1, 11))


def brute_force(records, flt):
    # independent oracle: first-principles re-statement of filter semantics
    out = []
    for r in records:
        if flt.kinds is not None and r.kind not in flt.kinds:
            continue
        if flt.t_min is not None and r.timestamp < flt.t_min:
            continue
        if flt.t_max is not None and r.timestamp >= flt.t_max:
            continue
        if flt.run_id is not None and r.run_id != flt.run_id:
            continue
        if flt.node_id is not None and r.node_id != flt.node_id:
            continue
        skip = False
        for k, v in flt.payload_eq.items():
            if r.payload.get(k) != v:
                skip = True
        for k, (lo, hi) in flt.payload_range.items():
            v = r.payload.get(k)
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                skip = True
            elif not lo <= v <= hi:
                skip = True
        if not skip:
            out.append(r)
    out.sort(key=lambda r: r.id)
    return out


def test_query_matches_linear_scan_oracle(tmp_path):
    rng = random.Random(42)
    clock = {"t": 0}

    def tick():
        clock["t"] += rng.randint(0, 3)
        return clock["t"]

    s = Store(str(tmp_path / "big.log"), clock=tick)
    kinds = list(KINDS)
    for i in range(10_000):
        kind = rng.choice(kinds)
        s.append(
            kind,
            {"value": rng.randint(0, 100), "tag": rng.choice("abc")},
            run_id=f"r{rng.randint(1, 5)}" if kind in ("experiment_data",
                                                       "run_event") else None,
            node_id=f"n{rng.randint(1, 9)}" if kind in ("monitoring_data",
                                                        "experiment_data") else None,
        )
    everything = s.query()
    for _ in range(60):
        flt = QueryFilter(
            kinds=set(rng.sample(kinds, rng.randint(1, 4)))
            if rng.random() < 0.7 else None,
            t_min=rng.randint(0, clock["t"]) if rng.random() < 0.5 else None,
            t_max=rng.randint(0, clock["t"]) if rng.random() < 0.5 else None,
            run_id=f"r{rng.randint(1, 5)}" if rng.random() < 0.3 else None,
            node_id=f"n{rng.randint(1, 9)}" if rng.random() < 0.3 else None,
            payload_eq={"tag": rng.choice("abc")} if rng.random() < 0.4 else {},
            payload_range={"value": (rng.randint(0, 50), rng.randint(50, 100))}
            if rng.random() < 0.4 else {},
        )
        assert s.query(flt) == brute_force(everything, flt)
    s.close()


def test_export_deterministic_and_empty(store):
    assert store.export() == b""
    store.append("run_event", {"event": "a"})
    store.append("monitoring_data", {"up": True}, node_id="n1")
    first = store.export()
    second = store.export()
    assert first == second
    assert len(first.splitlines()) == 2


def test_export_import_round_trip(tmp_path):
    s1 = Store(str(tmp_path / "src.log"), clock=lambda: 5)
    for i in range(20):
        s1.append("run_event", {"i": i})
    s1.append("monitoring_data", {"up": False}, node_id="n3")
    stream = s1.export()

    s2 = Store(str(tmp_path / "dst.log"))
    s2.import_stream(stream)
    flt = QueryFilter(kinds={"monitoring_data"})
    assert s2.query(flt) == s1.query(flt)
    assert s2.export() == stream
    s1.close()
    s2.close()


def test_reopen_preserves_records(tmp_path):
    path = str(tmp_path / "dur.log")
    s = Store(path, clock=lambda: 9)
    s.append("run_event", {"event": "one"})
    s.append("description", {"text": "zwei"})
    s.close()
    reopened = Store(path)
    assert [r.payload for r in reopened.query()] == [{"event": "one"},
                                                     {"text": "zwei"}]
    assert reopened.append("run_event", {}) == 3
    reopened.close()


def test_kill_and_reopen_durability(tmp_path):
    path = str(tmp_path / "kill.log")
    script = (
        "import os, sys\n"
        "from meshbed.store import Store\n"
        f"s = Store({path!r}, clock=lambda: 1)\n"
        "for i in range(25):\n"
        "    s.append('run_event', {'i': i})\n"
        "os._exit(1)\n"  # hard kill: no close, no atexit
    )
    proc = subprocess.run([sys.executable, "-c", script])
    assert proc.returncode == 1
    s = Store(path)
    assert len(s.query()) == 25
    s.close()


def test_torn_tail_is_dropped_on_open(tmp_path):
    path = str(tmp_path / "torn.log")
    s = Store(path, clock=lambda: 1)
    s.append("run_event", {"i": 0})
    s.append("run_event", {"i": 1})
    s.close()
    with open(path, "ab") as fh:
        fh.write(b"999\n{\"id\": 3, \"kind\"")  # interrupted write
    reopened = Store(path)
    assert len(reopened.query()) == 2
    assert reopened.append("run_event", {"i": 2}) == 3
    reopened.close()
    again = Store(path)
    assert [r.payload["i"] for r in again.query()] == [0, 1, 2]
    again.close()


def test_append_only_no_mutation(store):
    rid = store.append("run_event", {"v": 1})
    first = store.get(rid)
    store.append("run_event", {"v": 2})
    assert store.get(rid) is first
    assert first.payload == {"v": 1}


def test_timestamps_monotone_under_backwards_clock(tmp_path):
    times = iter([100, 50, 200])
    s = Store(str(tmp_path / "mono.log"), clock=lambda: next(times))
    s.append("run_event", {})
    s.append("run_event", {})
    s.append("run_event", {})
    stamps = [r.timestamp for r in s.query()]
    assert stamps == sorted(stamps) == [100, 100, 200]
    s.close()


def test_read_export_parses_lines(store):
    store.append("run_event", {"x": 1})
    records = list(read_export(store.export()))
    assert records == store.query()
