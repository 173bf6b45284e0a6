import pytest

from meshbed.fleet import ChurnParams, FleetConfig, spawn
from meshbed.monitor import (
    Monitor,
    MonitorError,
    availability,
    downtime_fraction,
    step_uptime,
    uptime_downtime,
)
from meshbed.orchestrator import Engine, Orchestrator
from meshbed.protocol import ControlClient, ControlError
from meshbed.store import QueryFilter, Store


def make_stack(node_count=3, churn=None, watchdog=None, seed=0, cadence=60):
    config = FleetConfig(node_count=node_count, churn=churn,
                         watchdog_s=watchdog, seed=seed)
    f = spawn(config)
    control = ControlClient.local(f)
    store = Store(None, clock=lambda: f.now)
    engine = Engine(control, store)
    monitor = Monitor(control, store, cadence_s=cadence)
    return f, store, engine, monitor


def test_poll_all_one_record_per_node():
    f, store, engine, monitor = make_stack(3)
    records = monitor.poll_all()
    assert len(records) == 3
    stored = store.query(QueryFilter(kinds={"monitoring_data"}))
    assert [r.node_id for r in stored] == ["n1", "n2", "n3"]
    assert all(r.payload["up"] for r in stored)


def test_down_node_polls_as_down_with_empty_details():
    f, store, engine, monitor = make_stack(2)
    f.nodes["n2"].up = False
    monitor.poll_all()
    rec = store.query(QueryFilter(kinds={"monitoring_data"}, node_id="n2"))[0]
    assert rec.payload["up"] is False
    assert rec.payload["links"] == []
    assert rec.payload["interfaces"] == []


def test_cadence_sixty_records_per_hour():
    f, store, engine, monitor = make_stack(3, cadence=60)
    monitor.attach(engine, start=0)
    engine.run(until=3600)
    for node in ("n1", "n2", "n3"):
        records = store.query(QueryFilter(kinds={"monitoring_data"},
                                          node_id=node))
        assert len(records) == 60
        assert [r.timestamp for r in records] == list(range(0, 3600, 60))


def test_poll_gap_recorded_not_silent():
    f, store, engine, monitor = make_stack(1)
    calls = {"n": 0}
    real_transport = monitor.control._transport

    def flaky(line):
        calls["n"] += 1
        if b'"POLL"' in line:
            raise ControlError("LINK_LOST", "management backbone down")
        return real_transport(line)

    monitor.control._transport = flaky
    monitor.poll_all()
    gaps = [r for r in store.query(QueryFilter(kinds={"run_event"}))
            if r.payload.get("event") == "poll_gap"]
    assert gaps and gaps[0].payload["error"] == "LINK_LOST"


def test_availability_all_up_is_one():
    f, store, engine, monitor = make_stack(1)
    monitor.attach(engine, start=0)
    engine.run(until=600)
    assert availability(store, "n1", 0, 600) == 1.0


def test_availability_no_data_errors():
    f, store, engine, monitor = make_stack(1)
    with pytest.raises(MonitorError) as err:
        availability(store, "n1", 0, 100)
    assert err.value.code == "NO_DATA"
    with pytest.raises(MonitorError):
        step_uptime([(0, True)], 100, 100)


def test_step_integration_and_exact_conservation():
    samples = [(0, True), (60, False), (120, True), (180, True)]
    assert step_uptime(samples, 0, 240) == 60 + 0 + 60 + 60
    up = step_uptime(samples, 0, 240)
    assert up + (240 - up) == 240


def test_uptime_downtime_conservation_from_store():
    f, store, engine, monitor = make_stack(
        2, churn=ChurnParams(400, 80), watchdog=100, seed=11, cadence=30)
    monitor.attach(engine, start=0)
    engine.run(until=20_000)
    for node in ("n1", "n2"):
        up, down = uptime_downtime(store, node, 0, 20_000)
        assert up + down == 20_000
        assert availability(store, node, 0, 20_000) + \
            downtime_fraction(store, node, 0, 20_000) == 1.0


def test_monitor_tracks_ground_truth():
    f, store, engine, monitor = make_stack(
        4, churn=ChurnParams(2000, 300), watchdog=400, seed=21, cadence=60)
    monitor.attach(engine, start=0)
    horizon = 200_000
    engine.run(until=horizon)
    for node in f.order:
        truth_up, _ = f.uptime(node)
        measured = availability(store, node, 0, horizon)
        assert abs(measured - truth_up / horizon) < 0.005


def test_monitoring_independent_of_experiments():
    f, store, engine, monitor = make_stack(2, cadence=60)
    orch = Orchestrator(engine, seed=0)
    monitor.attach(engine, start=0)
    from meshbed.descript import (Action, ExperimentDescription, NodeGroup,
                                  StaticSelection)
    desc = ExperimentDescription(
        id="noisy", replications=2, duration_limit=300,
        groups=[NodeGroup("g", "client", StaticSelection(["n1", "n2"]))],
        actions=[Action("g", "noop", {}, 10, 30)],
    )
    orch.schedule(desc, start=0)
    engine.run(until=600)
    monitoring = store.query(QueryFilter(kinds={"monitoring_data"}))
    # the execution path never writes monitoring records, and dropping all
    # experiment records would not change a single monitoring record
    assert len(monitoring) == 2 * 10
    experiment = store.query(QueryFilter(kinds={"experiment_data"}))
    assert experiment
    assert {r.id for r in monitoring}.isdisjoint({r.id for r in experiment})


def test_detach_stops_polling():
    f, store, engine, monitor = make_stack(1, cadence=60)
    monitor.attach(engine, start=0)
    engine.run(until=300)
    monitor.detach()
    count = len(store.query(QueryFilter(kinds={"monitoring_data"})))
    engine.run(until=900)
    assert len(store.query(QueryFilter(kinds={"monitoring_data"}))) == count
