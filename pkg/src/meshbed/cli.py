"""Command-line interface.

Most subcommands are thin clients over the portal HTTP API; `serve` starts
the service stack and `simulate` runs a seeded headless scenario and
exports the resulting store. Read commands take --format=json for
machine-readable output.

Exit codes: 0 success, 1 generic error, 2 validation failure, 3 not found,
4 conflict (illegal state transition).
"""

import argparse
import json
import sys
import urllib.error
import urllib.request

from . import __version__, config as config_mod, portal

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VALIDATION = 2
EXIT_NOT_FOUND = 3
EXIT_CONFLICT = 4

_STATUS_EXITS = {400: EXIT_VALIDATION, 401: EXIT_ERROR, 403: EXIT_ERROR,
                 404: EXIT_NOT_FOUND, 409: EXIT_CONFLICT}


class CliError(Exception):
    def __init__(self, exit_code: int, message: str, doc=None):
        super().__init__(message)
        self.exit_code = exit_code
        self.doc = doc


def _request(args, method: str, path: str, body: bytes | None = None,
             content_type: str = "text/plain"):
    url = args.server.rstrip("/") + path
    request = urllib.request.Request(url, data=body, method=method)
    if body is not None:
        request.add_header("Content-Type", content_type)
    if args.token:
        request.add_header("Authorization", f"Bearer {args.token}")
    try:
        with urllib.request.urlopen(request) as response:
            return response.status, response.read()
    except urllib.error.HTTPError as err:
        payload = err.read()
        try:
            doc = json.loads(payload)
        except json.JSONDecodeError:
            doc = {"error": {"code": "HTTP", "message": payload.decode(errors="replace")}}
        exit_code = _STATUS_EXITS.get(err.code, EXIT_ERROR)
        message = doc.get("error", {}).get("message", f"HTTP {err.code}")
        raise CliError(exit_code, message, doc)
    except urllib.error.URLError as err:
        raise CliError(EXIT_ERROR, f"cannot reach {url}: {err.reason}")


def _emit(args, doc, human):
    if getattr(args, "format", "table") == "json":
        print(json.dumps(doc, indent=2, sort_keys=True))
    else:
        human(doc)


# --- subcommands ------------------------------------------------------------------

def cmd_validate(args):
    text = open(args.file, "rb").read()
    try:
        status, body = _request(args, "POST", "/experiments?validate_only=1",
                                text)
    except CliError as err:
        if err.doc and "report" in (err.doc or {}):
            _print_report(err.doc["report"])
            raise CliError(EXIT_VALIDATION, "description invalid", err.doc)
        raise
    doc = json.loads(body)
    _print_report(doc["report"])
    print(f"ok: {doc['id']}")
    return EXIT_OK


def _print_report(report):
    for issue in report.get("errors", []):
        print(f"error {issue['code']} at {issue['location']}: {issue['message']}",
              file=sys.stderr)
    for issue in report.get("warnings", []):
        print(f"warning {issue['code']} at {issue['location']}: "
              f"{issue['message']}", file=sys.stderr)


def cmd_submit(args):
    text = open(args.file, "rb").read()
    try:
        status, body = _request(args, "POST", "/experiments", text)
    except CliError as err:
        if err.doc and "report" in err.doc:
            _print_report(err.doc["report"])
        raise
    doc = json.loads(body)
    _print_report(doc["report"])
    print(doc["id"])
    if args.schedule is not None:
        return _schedule(args, doc["id"], args.schedule)
    return EXIT_OK


def _schedule(args, experiment_id: str, start: int):
    body = json.dumps({"start": start}).encode()
    status, payload = _request(args, "POST",
                               f"/experiments/{experiment_id}/schedule",
                               body, "application/json")
    doc = json.loads(payload)
    entry = doc["entry"]
    print(f"scheduled {experiment_id} as entry {entry['seq']} "
          f"at t={entry['requested_start']}")
    return EXIT_OK


def cmd_schedule(args):
    return _schedule(args, args.experiment_id, args.start)


def cmd_queue(args):
    status, body = _request(args, "GET", "/queue")
    doc = json.loads(body)

    def human(doc):
        print(f"t={doc['now']}  {len(doc['entries'])} entries")
        for entry in doc["entries"]:
            runs = ",".join(r["phase"] for r in entry["runs"]) or "-"
            print(f"  [{entry['seq']:>3}] {entry['experiment_id']:<24} "
                  f"{entry['status']:<8} nodes={len(entry['nodes']):<3} "
                  f"runs={runs}")
    _emit(args, doc, human)
    return EXIT_OK


def cmd_abort(args):
    status, body = _request(args, "DELETE", f"/runs/{args.run_id}")
    doc = json.loads(body)
    print(f"run {args.run_id}: {doc['run']['phase']}")
    return EXIT_OK


def cmd_nodes(args):
    status, body = _request(args, "GET", f"/nodes?window={args.window}")
    doc = json.loads(body)

    def human(doc):
        print(f"t={doc['now']}  {len(doc['nodes'])} nodes "
              f"(availability window {doc['window']}s)")
        for node in doc["nodes"]:
            avail = ("-" if node["availability"] is None
                     else f"{node['availability']:.4f}")
            state = "up" if node["up"] else "DOWN"
            print(f"  {node['id']:<6} {node['building']:<5} {state:<5} "
                  f"degree={node['degree']:<3} availability={avail}")
    _emit(args, doc, human)
    return EXIT_OK


def cmd_report(args):
    status, body = _request(args, "GET", f"/reports/usage?period={args.period}"
                            f"&runtime_bin_h={args.runtime_bin}"
                            f"&nodes_bin={args.nodes_bin}")
    doc = json.loads(body)

    def human(doc):
        print(f"period [{doc['period']['start']}, {doc['period']['end']})")
        for key in ("experiments", "max_runtime_h", "mean_runtime_h",
                    "max_nodes", "mean_nodes", "users",
                    "experiments_per_user"):
            print(f"  {key:<22} {doc[key]}")
        if doc["topics"]:
            print("  topics:")
            for topic, entry in doc["topics"].items():
                print(f"    {topic:<20} count={entry['count']:<5} "
                      f"hours={entry['hours']}")
    _emit(args, doc, human)
    return EXIT_OK


def cmd_pipeline(args):
    text = open(args.file, "rb").read()
    status, body = _request(args, "POST", "/pipelines", text)
    sys.stdout.write(body.decode("utf-8", errors="replace"))
    return EXIT_OK


def cmd_serve(args):
    service = config_mod.parse_config(open(args.config).read())
    if args.port is not None:
        service.port = args.port

    def ready(server):
        print(f"listening on {server.endpoint} "
              f"(pace {service.pace}x, {service.fleet.node_count} nodes)",
              flush=True)

    portal.serve(service, store_path=args.store, ui_dir=args.ui,
                 verbose=args.verbose, ready=ready)
    return EXIT_OK


def cmd_simulate(args):
    service = config_mod.parse_config(open(args.config).read())
    if args.seed is not None:
        service.fleet.seed = args.seed
        service.seed = args.seed
    workload = service.workload
    if workload is None:
        raise CliError(EXIT_ERROR, "config has no workload section")

    stack = portal.ServiceStack(service, store_path=args.store)
    stack.attach_monitor()
    stack.run_workload(
        experiments=workload.experiments, horizon_s=workload.horizon_s,
        seed=workload.seed if workload.seed is not None else service.seed,
        max_nodes=workload.max_nodes, mean_nodes=workload.mean_nodes,
        max_replications=workload.max_replications)
    stream = stack.store.export()
    if args.out:
        with open(args.out, "wb") as fh:
            fh.write(stream)
    else:
        sys.stdout.buffer.write(stream)
    entries = stack.orchestrator.entries
    done = sum(1 for e in entries if e.status == "done")
    print(f"simulated {len(entries)} experiments to t={stack.engine.now}: "
          f"{done} done, {len(entries) - done} other; "
          f"{len(stack.store)} records", file=sys.stderr)
    stack.store.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="meshbed",
        description="testbed management for wireless multi-hop experiments")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--server", default="http://127.0.0.1:8340",
                        help="portal base URL")
    parser.add_argument("--token", default="",
                        help="API token for mutating commands")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a .desc file")
    p.add_argument("file")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("submit", help="submit a .desc file")
    p.add_argument("file")
    p.add_argument("--schedule", type=int, default=None,
                   help="also schedule at this virtual time")
    p.set_defaults(fn=cmd_submit)

    p = sub.add_parser("schedule", help="schedule a stored experiment")
    p.add_argument("experiment_id")
    p.add_argument("start", type=int)
    p.set_defaults(fn=cmd_schedule)

    p = sub.add_parser("queue", help="show the schedule queue")
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.set_defaults(fn=cmd_queue)

    p = sub.add_parser("abort", help="abort a run")
    p.add_argument("run_id")
    p.set_defaults(fn=cmd_abort)

    p = sub.add_parser("nodes", help="inventory and availability")
    p.add_argument("--window", type=int, default=3600)
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.set_defaults(fn=cmd_nodes)

    p = sub.add_parser("report", help="usage report")
    p.add_argument("--period", default="all", help="t0:t1 or all")
    p.add_argument("--runtime-bin", type=float, default=1.0, dest="runtime_bin")
    p.add_argument("--nodes-bin", type=float, default=10.0, dest="nodes_bin")
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("pipeline", help="run a .eval pipeline")
    p.add_argument("file")
    p.set_defaults(fn=cmd_pipeline)

    p = sub.add_parser("serve", help="start the portal service")
    p.add_argument("--config", required=True)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--store", default=None, help="store log path")
    p.add_argument("--ui", default=None, help="web UI dist directory")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("simulate", help="run a seeded headless scenario")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="export file (default stdout)")
    p.add_argument("--store", default=None, help="store log path")
    p.set_defaults(fn=cmd_simulate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.exit_code
    except KeyboardInterrupt:
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
