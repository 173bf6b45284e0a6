import json
import re
import subprocess
import sys
import threading
import time
from pathlib import Path

import pytest
import requests

from meshbed import cli
from tests.conftest import MINIMAL_DESC

REPO = Path(__file__).resolve().parent.parent
DEMO_CFG = REPO / "configs" / "demo.cfg"


def run_cli(argv, portal_server=None):
    args = ["--server", portal_server.endpoint, "--token", "tok-root"] \
        if portal_server else []
    out, err = [], []

    class Capture:
        def __init__(self, sink):
            self.sink = sink

        def write(self, text):
            self.sink.append(text)

        def flush(self):
            pass

    import io
    stdout, stderr = io.StringIO(), io.StringIO()
    old = sys.stdout, sys.stderr
    sys.stdout, sys.stderr = stdout, stderr
    try:
        code = cli.main(args + argv)
    finally:
        sys.stdout, sys.stderr = old
    return code, stdout.getvalue(), stderr.getvalue()


def test_validate_ok(tmp_path, portal_server):
    path = tmp_path / "ok.desc"
    path.write_text(MINIMAL_DESC)
    code, out, err = run_cli(["validate", str(path)], portal_server)
    assert code == 0
    assert "ok: smoke-1" in out


def test_validate_undeclared_group_exits_2(tmp_path, portal_server):
    path = tmp_path / "bad.desc"
    path.write_text(MINIMAL_DESC.replace("target: g", "target: ghost"))
    code, out, err = run_cli(["validate", str(path)], portal_server)
    assert code == 2
    assert "GROUP_UNDECLARED" in err


def test_submit_schedule_queue_abort_exit_codes(tmp_path, portal_server):
    path = tmp_path / "exp.desc"
    slow = MINIMAL_DESC.replace(
        "  command: noop", "  command: noop\n  start: 500")
    path.write_text(slow)
    code, out, _ = run_cli(["submit", str(path), "--schedule", "0"],
                           portal_server)
    assert code == 0
    portal_server.stack.engine.run(until=10)

    code, out, _ = run_cli(["queue", "--format", "json"], portal_server)
    assert code == 0
    doc = json.loads(out)
    run_id = doc["entries"][0]["runs"][0]["run_id"]

    code, out, _ = run_cli(["abort", run_id], portal_server)
    assert code == 0
    code, _, err = run_cli(["abort", run_id], portal_server)
    assert code == 4                         # conflict: already terminal
    code, _, err = run_cli(["abort", "missing.run.1"], portal_server)
    assert code == 3                         # not found


def test_nodes_and_report_formats(portal_server):
    code, out, _ = run_cli(["nodes", "--format", "json"], portal_server)
    assert code == 0
    assert len(json.loads(out)["nodes"]) == 6
    code, out, _ = run_cli(["nodes"], portal_server)
    assert "n1" in out
    code, out, _ = run_cli(["report", "--format", "json"], portal_server)
    assert code == 0
    assert "experiments" in json.loads(out)


def test_pipeline_command(tmp_path, portal_server):
    stack = portal_server.stack
    for v in (1.0, 2.0, 3.0):
        stack.store.append("experiment_data", {"metrics": {"x": [v]}},
                           run_id="r1")
    spec = tmp_path / "mean.eval"
    spec.write_text("format: 1\n\n"
                    "input store\n  kind: experiment_data\n  value: x\n\n"
                    "stage summarize\n\noutput table\n")
    code, out, _ = run_cli(["pipeline", str(spec)], portal_server)
    assert code == 0
    assert out.splitlines()[0].startswith("name,n,mean")


def test_simulate_deterministic_byte_identical(tmp_path):
    outputs = []
    for name in ("a", "b"):
        out_path = tmp_path / f"export-{name}.ndjson"
        proc = subprocess.run(
            [sys.executable, "-m", "meshbed.cli", "simulate",
             "--seed", "42", "--config", str(DEMO_CFG),
             "--out", str(out_path)],
            capture_output=True, text=True, timeout=300)
        assert proc.returncode == 0, proc.stderr
        assert "simulated 20 experiments" in proc.stderr
        outputs.append(out_path.read_bytes())
    assert outputs[0] == outputs[1]
    assert len(outputs[0].splitlines()) > 100


def test_simulate_different_seed_differs(tmp_path):
    exports = {}
    for seed in ("42", "43"):
        out_path = tmp_path / f"export-{seed}.ndjson"
        proc = subprocess.run(
            [sys.executable, "-m", "meshbed.cli", "simulate",
             "--seed", seed, "--config", str(DEMO_CFG),
             "--out", str(out_path)],
            capture_output=True, text=True, timeout=300)
        assert proc.returncode == 0, proc.stderr
        exports[seed] = out_path.read_bytes()
    assert exports["42"] != exports["43"]


def test_serve_end_to_end(tmp_path):
    proc = subprocess.Popen(
        [sys.executable, "-m", "meshbed.cli", "serve",
         "--config", str(DEMO_CFG), "--port", "0"],
        stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True)
    try:
        line = proc.stdout.readline()
        match = re.search(r"listening on (http://\S+)", line)
        assert match, line
        endpoint = match.group(1)
        deadline = time.time() + 10
        doc = None
        while time.time() < deadline:
            try:
                doc = requests.get(endpoint + "/health", timeout=2).json()
                break
            except requests.RequestException:
                time.sleep(0.2)
        assert doc and doc["status"] == "ok"
        # pace 60: virtual clock should move forward on its own
        t0 = doc["now"]
        time.sleep(1.5)
        t1 = requests.get(endpoint + "/health", timeout=2).json()["now"]
        assert t1 > t0
        r = requests.post(endpoint + "/experiments", data=MINIMAL_DESC,
                          headers={"Authorization": "Bearer demo-token"})
        assert r.status_code == 201
    finally:
        proc.terminate()
        proc.wait(timeout=10)
