"""Analysis pipelines and usage reporting over the central store.

usage_report() condenses a record stream into the numbers an operator
publishes about a period: how many experiments ran, how long, on how many
nodes, by whom and on which topics, plus runtime and node-count histograms
and the per-node availability list. Everything is computed from records
alone, so a report is reproducible from an export.

run_pipeline() executes a small input -> processing -> output chain
described in a ``.eval`` document (same sectioned text as ``.desc``):
registered stages only, types checked before any work, deterministic
output for a fixed store state. Table output is CSV with a documented
column order; plot-data output is a canonical JSON document the web UI and
external tools consume as-is.
"""

import io
from dataclasses import dataclass, field

from . import monitor as monitor_mod
from .sectiontext import FormatError, read_document
from .stats import MetricSummary, histogram, summarize
from .store import QueryFilter, Record, Store, read_export
from .util import canonical_json

FORMAT_VERSION = 1


class PipelineError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


# --- usage report -------------------------------------------------------------

@dataclass
class UsageReport:
    period: tuple[int, int]
    experiments: int
    max_runtime_h: float
    mean_runtime_h: float
    max_nodes: int
    mean_nodes: float
    users: int
    experiments_per_user: float
    topics: dict[str, tuple[int, float]]          # topic -> (count, hours)
    availability: list[tuple[str, float]]          # node -> up fraction
    runtime_histogram: list[tuple[float, int]]
    nodes_histogram: list[tuple[float, int]]

    def to_doc(self) -> dict:
        return {
            "period": {"start": self.period[0], "end": self.period[1]},
            "experiments": self.experiments,
            "max_runtime_h": self.max_runtime_h,
            "mean_runtime_h": self.mean_runtime_h,
            "max_nodes": self.max_nodes,
            "mean_nodes": self.mean_nodes,
            "users": self.users,
            "experiments_per_user": self.experiments_per_user,
            "topics": {name: {"count": c, "hours": h}
                       for name, (c, h) in sorted(self.topics.items())},
            "availability": [{"node": n, "availability": a}
                             for n, a in self.availability],
            "runtime_histogram": [{"start": s, "count": c}
                                  for s, c in self.runtime_histogram],
            "nodes_histogram": [{"start": s, "count": c}
                                for s, c in self.nodes_histogram],
        }


def usage_report(records, period: tuple[int, int], *,
                 runtime_bin_h: float = 1.0,
                 nodes_bin: float = 10.0) -> UsageReport:
    """Usage summary for [start, end) computed from records alone.

    experiments_per_user is defined as experiments/users (documented: the
    two-decimal convention makes 661 experiments by 30 users 22.03).
    """
    start, end = period
    if end <= start:
        raise ValueError("empty period")
    done: list[dict] = []
    samples: dict[str, list[tuple[int, bool]]] = {}
    for record in records:
        if isinstance(record, dict):
            record = Record.from_doc(record)
        if not (start <= record.timestamp < end):
            continue
        if (record.kind == "run_event"
                and record.payload.get("event") == "experiment_done"):
            done.append(record.payload)
        elif record.kind == "monitoring_data":
            samples.setdefault(record.node_id, []).append(
                (record.timestamp, bool(record.payload.get("up"))))

    runtimes = [float(p.get("runtime_h", p.get("runtime_s", 0) / 3600.0))
                for p in done]
    node_counts = [int(p.get("nodes_used", 0)) for p in done]
    users = sorted({p.get("user", "") for p in done})
    topics: dict[str, tuple[int, float]] = {}
    for p in done:
        topic = str(p.get("topic") or "other")
        runtime = float(p.get("runtime_h", p.get("runtime_s", 0) / 3600.0))
        count, hours = topics.get(topic, (0, 0.0))
        topics[topic] = (count + 1, hours + runtime)

    availability = []
    for node in sorted(samples, key=_node_sort_key):
        up = monitor_mod.step_uptime(samples[node], start, end)
        availability.append((node, up / (end - start)))

    n = len(done)
    return UsageReport(
        period=(start, end),
        experiments=n,
        max_runtime_h=max(runtimes) if runtimes else 0.0,
        mean_runtime_h=(sum(runtimes) / n) if n else 0.0,
        max_nodes=max(node_counts) if node_counts else 0,
        mean_nodes=(sum(node_counts) / n) if n else 0.0,
        users=len(users),
        experiments_per_user=(n / len(users)) if users else 0.0,
        topics=topics,
        availability=availability,
        runtime_histogram=histogram(runtimes, runtime_bin_h),
        nodes_histogram=histogram(node_counts, nodes_bin),
    )


def _node_sort_key(node_id: str):
    digits = "".join(ch for ch in node_id if ch.isdigit())
    return (node_id.rstrip("0123456789"), int(digits) if digits else 0)


# --- pipelines -----------------------------------------------------------------

@dataclass
class PipelineStage:
    name: str
    params: dict[str, str] = field(default_factory=dict)


@dataclass
class PipelineSpec:
    input: PipelineStage
    stages: list[PipelineStage]
    output: PipelineStage


@dataclass
class PipelineResult:
    kind: str                  # table | plot-data | report
    media_type: str
    content: bytes
    data: object = None


def parse_pipeline(text: str) -> PipelineSpec:
    """Parse a .eval document: one `input`, any `stage`s, one `output`."""
    version, sections = read_document(text)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}", 1)
    input_stage = None
    output_stage = None
    stages: list[PipelineStage] = []
    for section in sections:
        if section.arg is None:
            raise FormatError(f"section {section.name!r} needs a stage name",
                              section.line)
        stage = PipelineStage(section.arg,
                              {e.key: e.value for e in section.entries})
        if section.name == "input":
            if input_stage is not None:
                raise FormatError("duplicate 'input' section", section.line)
            input_stage = stage
        elif section.name == "stage":
            stages.append(stage)
        elif section.name == "output":
            if output_stage is not None:
                raise FormatError("duplicate 'output' section", section.line)
            output_stage = stage
        else:
            raise FormatError(f"unknown section {section.name!r}", section.line)
    if input_stage is None:
        raise FormatError("pipeline needs an 'input' section", 1)
    if output_stage is None:
        raise FormatError("pipeline needs an 'output' section", 1)
    return PipelineSpec(input_stage, stages, output_stage)


def _float_param(stage: PipelineStage, key: str, default: float | None = None) -> float:
    value = stage.params.get(key)
    if value is None:
        if default is None:
            raise PipelineError("STAGE_PARAM",
                                f"stage {stage.name!r} needs parameter {key!r}")
        return default
    try:
        return float(value)
    except ValueError:
        raise PipelineError("STAGE_PARAM",
                            f"stage {stage.name!r}: {key} must be a number")


def _int_param(stage: PipelineStage, key: str, default: int | None = None) -> int:
    value = stage.params.get(key)
    if value is None:
        if default is None:
            raise PipelineError("STAGE_PARAM",
                                f"stage {stage.name!r} needs parameter {key!r}")
        return default
    try:
        return int(value)
    except ValueError:
        raise PipelineError("STAGE_PARAM",
                            f"stage {stage.name!r}: {key} must be an integer")


def _extract_series(records: list[Record], key: str) -> list[float]:
    series: list[float] = []
    for record in records:
        payload = record.payload
        value = payload.get(key)
        if value is None and isinstance(payload.get("metrics"), dict):
            value = payload["metrics"].get(key)
        if value is None:
            continue
        if isinstance(value, list):
            series.extend(float(v) for v in value)
        elif isinstance(value, (int, float)) and not isinstance(value, bool):
            series.append(float(value))
    return series


def _input_store(stage: PipelineStage, store: Store | None):
    if store is None:
        raise PipelineError("NO_STORE", "pipeline input 'store' needs a store")
    kinds = None
    if "kind" in stage.params:
        kinds = set(stage.params["kind"].split())
    eq = {key[3:]: value for key, value in stage.params.items()
          if key.startswith("eq.")}
    flt = QueryFilter(
        kinds=kinds,
        run_id=stage.params.get("run"),
        node_id=stage.params.get("node"),
        t_min=_int_param(stage, "t_min", 0) if "t_min" in stage.params else None,
        t_max=_int_param(stage, "t_max", 0) if "t_max" in stage.params else None,
        payload_eq=eq,
    )
    records = store.query(flt)
    if "value" in stage.params:
        return "series", _extract_series(records, stage.params["value"])
    return "records", records


def _input_file(stage: PipelineStage, store: Store | None):
    path = stage.params.get("path")
    if path is None:
        raise PipelineError("STAGE_PARAM", "input 'file' needs a path")
    with open(path, "rb") as fh:
        records = list(read_export(fh.read()))
    if "value" in stage.params:
        return "series", _extract_series(records, stage.params["value"])
    return "records", records


def _stage_extract(stage: PipelineStage, kind: str, data):
    key = stage.params.get("key")
    if key is None:
        raise PipelineError("STAGE_PARAM", "stage 'extract' needs a key")
    return "series", _extract_series(data, key)


def _stage_summarize(stage: PipelineStage, kind: str, data):
    confidence = _float_param(stage, "confidence", 0.95)
    if not data:
        raise PipelineError("EMPTY_SERIES", "summarize needs at least one value")
    return "summary", summarize(data, confidence,
                                name=stage.params.get("name", ""))


def _stage_histogram(stage: PipelineStage, kind: str, data):
    width = _float_param(stage, "width")
    return "histogram", {"width": width, "bins": histogram(data, width)}


def _stage_usage(stage: PipelineStage, kind: str, data):
    start = _int_param(stage, "t_min")
    end = _int_param(stage, "t_max")
    report = usage_report(
        data, (start, end),
        runtime_bin_h=_float_param(stage, "runtime_bin_h", 1.0),
        nodes_bin=_float_param(stage, "nodes_bin", 10.0))
    return "report", report


_INPUTS = {"store": _input_store, "file": _input_file}
_STAGES = {
    "extract": ("records", _stage_extract),
    "summarize": ("series", _stage_summarize),
    "histogram": ("series", _stage_histogram),
    "usage": ("records", _stage_usage),
}
_OUTPUTS = ("table", "plot-data", "report")
_STAGE_RESULTS = {"extract": "series", "summarize": "summary",
                  "histogram": "histogram", "usage": "report"}


def _check_spec(spec: PipelineSpec):
    if spec.input.name not in _INPUTS:
        raise PipelineError("UNKNOWN_STAGE",
                            f"unknown input stage {spec.input.name!r}")
    kind = "series" if "value" in spec.input.params else "records"
    for stage in spec.stages:
        if stage.name not in _STAGES:
            raise PipelineError("UNKNOWN_STAGE",
                                f"unknown stage {stage.name!r}")
        expected, _ = _STAGES[stage.name]
        if kind != expected:
            raise PipelineError(
                "STAGE_MISMATCH",
                f"stage {stage.name!r} consumes {expected}, gets {kind}")
        kind = _STAGE_RESULTS[stage.name]
    if spec.output.name not in _OUTPUTS:
        raise PipelineError("UNKNOWN_STAGE",
                            f"unknown output stage {spec.output.name!r}")
    if spec.output.name == "report" and kind != "report":
        raise PipelineError("STAGE_MISMATCH", "output 'report' needs a report")
    return kind


def run_pipeline(spec: PipelineSpec, store: Store | None = None) -> PipelineResult:
    """Validate the chain, then run it. Unknown stages fail before any work."""
    _check_spec(spec)
    kind, data = _INPUTS[spec.input.name](spec.input, store)
    for stage in spec.stages:
        _, fn = _STAGES[stage.name]
        kind, data = fn(stage, kind, data)
    return _render(spec.output, kind, data)


# --- output rendering -----------------------------------------------------------

def _csv_cell(value) -> str:
    text = str(value)
    if any(c in text for c in ",\"\n"):
        text = '"' + text.replace('"', '""') + '"'
    return text


def _csv(rows: list[list]) -> bytes:
    out = io.StringIO()
    for row in rows:
        out.write(",".join(_csv_cell(v) for v in row))
        out.write("\r\n")
    return out.getvalue().encode("utf-8")


def _summary_rows(summary: MetricSummary) -> list[list]:
    # documented column order for summary tables
    header = ["name", "n", "mean", "stddev", "confidence", "ci_low", "ci_high",
              "min", "q1", "median", "q3", "max", "notch"]
    row = [summary.name, summary.n, summary.mean, summary.stddev,
           summary.confidence, summary.ci_low, summary.ci_high,
           summary.minimum, summary.q1, summary.median, summary.q3,
           summary.maximum, summary.notch]
    return [header, row]


def _render(output: PipelineStage, kind: str, data) -> PipelineResult:
    if output.name == "table":
        if kind == "summary":
            rows = _summary_rows(data)
        elif kind == "histogram":
            rows = [["bin_start", "count"]] + [[s, c] for s, c in data["bins"]]
        elif kind == "series":
            rows = [["value"]] + [[v] for v in data]
        elif kind == "report":
            doc = data.to_doc()
            rows = [["field", "value"]]
            for key in ("experiments", "max_runtime_h", "mean_runtime_h",
                        "max_nodes", "mean_nodes", "users",
                        "experiments_per_user"):
                rows.append([key, doc[key]])
            for topic, entry in doc["topics"].items():
                rows.append([f"topic:{topic}",
                             f"{entry['count']};{entry['hours']}"])
        else:
            rows = [["records"], [len(data)]]
        return PipelineResult("table", "text/csv", _csv(rows), data)

    if output.name == "plot-data":
        if kind == "summary":
            doc = {"type": "boxplot", "series": [_boxplot_doc(data)]}
        elif kind == "histogram":
            doc = {"type": "histogram", "width": data["width"],
                   "bins": [{"start": s, "count": c} for s, c in data["bins"]]}
        elif kind == "series":
            doc = {"type": "series", "values": list(data)}
        elif kind == "report":
            doc = {"type": "report", "report": data.to_doc()}
        else:
            doc = {"type": "records", "count": len(data)}
        return PipelineResult("plot-data", "application/json",
                              canonical_json(doc).encode("utf-8") + b"\n", data)

    # output == report
    doc = data.to_doc()
    return PipelineResult("report", "application/json",
                          canonical_json(doc).encode("utf-8") + b"\n", data)


def _boxplot_doc(summary: MetricSummary) -> dict:
    doc = summary.to_doc()
    doc["notch_low"] = summary.median - summary.notch
    doc["notch_high"] = summary.median + summary.notch
    return doc
