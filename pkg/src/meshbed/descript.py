"""Experiment description language: data model, parser, validator, serializer.

A ``.desc`` document is the formal, exchangeable statement of one experiment:
which nodes take part (grouped, with roles), what they do and when, how often
the experiment is replicated, and which metrics the runs produce. Documents
are plain sectioned text (see docs/descript-grammar.md); the serializer emits
a canonical form, so equal descriptions are byte-identical and any valid
description survives parse(serialize(d)) == d.

Parsing is strict about structure (syntax, duplicate group names, unknown
sections or keys) and permissive about semantics: referential and range
problems are reported by validate(), which returns a ValidationReport rather
than raising, so a web editor can show every problem at once.
"""

from dataclasses import dataclass, field

from . import actions, sectiontext
from .sectiontext import (
    Entry,
    FormatError,
    Section,
    TOKEN_RE,
    format_params,
    parse_command,
    parse_params,
    quote_token,
    read_document,
    write_document,
)

FORMAT_VERSION = 1

ROLES = ("client", "server", "servent")
AGGREGATIONS = ("mean_ci", "five_number", "histogram")
TRAFFIC_PATTERNS = ("none", "cbr", "burst")

ParseError = FormatError


# --- data model -----------------------------------------------------------

@dataclass
class Predicate:
    """Dynamic node selection predicate: building match, degree floor, or any."""

    kind: str                  # "building" | "degree" | "random"
    building: str = ""
    min_degree: int = 0

    def matches(self, node: "InventoryNode") -> bool:
        if self.kind == "building":
            return node.building == self.building
        if self.kind == "degree":
            return node.degree >= self.min_degree
        return True

    def text(self) -> str:
        if self.kind == "building":
            return f"building == {self.building}"
        if self.kind == "degree":
            return f"degree >= {self.min_degree}"
        return "random"

    @classmethod
    def parse(cls, text: str, line: int) -> "Predicate":
        parts = text.split()
        if parts == ["random"]:
            return cls("random")
        if len(parts) == 3 and parts[0] == "building" and parts[1] == "==":
            if not TOKEN_RE.match(parts[2]):
                raise FormatError(f"bad building name {parts[2]!r}", line)
            return cls("building", building=parts[2])
        if len(parts) == 3 and parts[0] == "degree" and parts[1] == ">=":
            if not parts[2].isdigit():
                raise FormatError(f"bad degree bound {parts[2]!r}", line)
            return cls("degree", min_degree=int(parts[2]))
        raise FormatError(
            "predicate must be 'random', 'building == <name>' or 'degree >= <n>'",
            line)


@dataclass
class StaticSelection:
    nodes: list[str]


@dataclass
class DynamicSelection:
    count: int
    predicate: Predicate


@dataclass
class NodeGroup:
    name: str
    role: str
    selection: StaticSelection | DynamicSelection


@dataclass
class Action:
    target: str                          # group name or node id
    command: str
    params: dict[str, str] = field(default_factory=dict)
    start_offset: int = 0                # seconds from replication start
    timeout: int = 60

    @property
    def is_critical(self) -> bool:
        spec = actions.REGISTRY.get(self.command)
        return spec.critical if spec else False


@dataclass
class MetricSpec:
    name: str
    unit: str
    aggregation: str


@dataclass
class TrafficSpec:
    pattern: str = "none"
    params: dict[str, str] = field(default_factory=dict)


@dataclass
class ExperimentDescription:
    id: str
    title: str = ""
    description: str = ""
    topic: str = "other"
    replications: int = 1
    duration_limit: int = 3600
    groups: list[NodeGroup] = field(default_factory=list)
    actions: list[Action] = field(default_factory=list)
    traffic: TrafficSpec = field(default_factory=TrafficSpec)
    metrics: list[MetricSpec] = field(default_factory=list)
    cleanup: list[Action] = field(default_factory=list)

    def group(self, name: str) -> NodeGroup | None:
        for g in self.groups:
            if g.name == name:
                return g
        return None


@dataclass
class Study:
    """An ordered series of experiments testing one hypothesis."""

    id: str
    title: str = ""
    hypothesis: str = ""
    experiments: list[str] = field(default_factory=list)


@dataclass
class InventoryNode:
    """What the validator needs to know about one available node."""

    id: str
    building: str = ""
    degree: int = 0


@dataclass
class ValidationIssue:
    code: str
    location: str
    message: str


@dataclass
class ValidationReport:
    errors: list[ValidationIssue] = field(default_factory=list)
    warnings: list[ValidationIssue] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def error_codes(self) -> list[str]:
        return [e.code for e in self.errors]

    def to_doc(self) -> dict:
        return {
            "ok": self.ok,
            "errors": [vars(e) for e in self.errors],
            "warnings": [vars(w) for w in self.warnings],
        }


# --- parsing ---------------------------------------------------------------

_EXPERIMENT_KEYS = {"id", "title", "description", "topic", "replications",
                    "duration_limit"}
_ACTION_KEYS = {"target", "command", "start", "timeout"}


def _require_int(section: Section, key: str, default: int | None) -> int:
    value = section.get(key)
    if value is None:
        if default is None:
            raise FormatError(f"missing required key {key!r}", section.line)
        return default
    if not value.isdigit():
        entry_line = next(e.line for e in section.entries if e.key == key)
        raise FormatError(f"{key} must be a non-negative integer", entry_line)
    return int(value)


def _require_token(section: Section, key: str, *, default: str | None = None) -> str:
    value = section.get(key)
    if value is None:
        if default is None:
            raise FormatError(f"missing required key {key!r}", section.line)
        return default
    if not TOKEN_RE.match(value):
        entry_line = next(e.line for e in section.entries if e.key == key)
        raise FormatError(f"{key} must be a plain token", entry_line)
    return value


def _check_keys(section: Section, allowed: set[str]):
    seen = set()
    for e in section.entries:
        if e.key not in allowed:
            raise FormatError(f"unknown key {e.key!r} in section {section.name!r}",
                              e.line)
        if e.key in seen:
            raise FormatError(f"duplicate key {e.key!r}", e.line)
        seen.add(e.key)


def _check_text_value(section: Section, key: str) -> str:
    value = section.get(key, "")
    for ch in value:
        if ord(ch) < 32:
            entry_line = next(e.line for e in section.entries if e.key == key)
            raise FormatError(f"control character in {key}", entry_line)
    return value


def _parse_action_section(section: Section) -> Action:
    _check_keys(section, _ACTION_KEYS)
    if section.arg is not None:
        raise FormatError(f"section {section.name!r} takes no argument", section.line)
    target = _require_token(section, "target")
    command_value = section.get("command")
    if command_value is None:
        raise FormatError("missing required key 'command'", section.line)
    command_line = next(e.line for e in section.entries if e.key == "command")
    name, params = parse_command(command_value, command_line)
    return Action(
        target=target,
        command=name,
        params=params,
        start_offset=_require_int(section, "start", 0),
        timeout=_require_int(section, "timeout", 60),
    )


def _parse_group_section(section: Section) -> NodeGroup:
    if section.arg is None or not TOKEN_RE.match(section.arg):
        raise FormatError("group needs a token name: 'group <name>'", section.line)
    _check_keys(section, {"role", "nodes", "count", "predicate"})
    role = _require_token(section, "role")
    nodes_value = section.get("nodes")
    count_value = section.get("count")
    if nodes_value is not None and count_value is not None:
        raise FormatError("group has both 'nodes' and 'count'", section.line)
    if nodes_value is None and count_value is None:
        raise FormatError("group needs 'nodes' (static) or 'count' (dynamic)",
                          section.line)
    selection: StaticSelection | DynamicSelection
    if nodes_value is not None:
        if section.get("predicate") is not None:
            raise FormatError("'predicate' only applies to dynamic groups",
                              section.line)
        node_line = next(e.line for e in section.entries if e.key == "nodes")
        ids = nodes_value.split()
        for node_id in ids:
            if not TOKEN_RE.match(node_id):
                raise FormatError(f"bad node id {node_id!r}", node_line)
        selection = StaticSelection(ids)
    else:
        count = _require_int(section, "count", None)
        predicate_value = section.get("predicate")
        if predicate_value is None:
            predicate = Predicate("random")
        else:
            predicate_line = next(e.line for e in section.entries
                                  if e.key == "predicate")
            predicate = Predicate.parse(predicate_value, predicate_line)
        selection = DynamicSelection(count, predicate)
    return NodeGroup(section.arg, role, selection)


def _parse_metrics_section(section: Section) -> list[MetricSpec]:
    if section.arg is not None:
        raise FormatError("section 'metrics' takes no argument", section.line)
    metrics = []
    for e in section.entries:
        if not TOKEN_RE.match(e.key):
            raise FormatError(f"bad metric name {e.key!r}", e.line)
        attrs = parse_params(e.value, e.line)
        unknown = set(attrs) - {"unit", "aggregation"}
        if unknown:
            raise FormatError(
                f"unknown metric attribute {sorted(unknown)[0]!r}", e.line)
        metrics.append(MetricSpec(
            name=e.key,
            unit=attrs.get("unit", ""),
            aggregation=attrs.get("aggregation", "mean_ci"),
        ))
    return metrics


def _parse_traffic_section(section: Section) -> TrafficSpec:
    if section.arg is not None:
        raise FormatError("section 'traffic' takes no argument", section.line)
    pattern = None
    params: dict[str, str] = {}
    seen = set()
    for e in section.entries:
        if e.key in seen:
            raise FormatError(f"duplicate key {e.key!r}", e.line)
        seen.add(e.key)
        if e.key == "pattern":
            if not TOKEN_RE.match(e.value):
                raise FormatError("pattern must be a plain token", e.line)
            pattern = e.value
        else:
            if not sectiontext.KEY_RE.match(e.key):
                raise FormatError(f"bad traffic parameter {e.key!r}", e.line)
            params[e.key] = e.value
    if pattern is None:
        raise FormatError("traffic section needs a 'pattern' key", section.line)
    return TrafficSpec(pattern, params)


def parse(text: str) -> ExperimentDescription:
    """Parse a .desc document. Raises ParseError with line/column on bad input."""
    version, sections = read_document(text)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}", 1)
    if not sections or sections[0].name != "experiment":
        line = sections[0].line if sections else 1
        raise FormatError("document must start with an 'experiment' section", line)

    desc: ExperimentDescription | None = None
    groups: list[NodeGroup] = []
    action_list: list[Action] = []
    metrics: list[MetricSpec] = []
    traffic: TrafficSpec | None = None
    cleanup: list[Action] = []

    for section in sections:
        if section.name == "experiment":
            if desc is not None:
                raise FormatError("duplicate 'experiment' section", section.line)
            if section.arg is not None:
                raise FormatError("section 'experiment' takes no argument",
                                  section.line)
            _check_keys(section, _EXPERIMENT_KEYS)
            desc = ExperimentDescription(
                id=_require_token(section, "id"),
                title=_check_text_value(section, "title"),
                description=_check_text_value(section, "description"),
                topic=_require_token(section, "topic", default="other"),
                replications=_require_int(section, "replications", 1),
                duration_limit=_require_int(section, "duration_limit", 3600),
            )
        elif section.name == "group":
            group = _parse_group_section(section)
            if any(g.name == group.name for g in groups):
                raise FormatError(f"duplicate group name {group.name!r}",
                                  section.line)
            groups.append(group)
        elif section.name == "action":
            action_list.append(_parse_action_section(section))
        elif section.name == "cleanup":
            cleanup.append(_parse_action_section(section))
        elif section.name == "metrics":
            if metrics:
                raise FormatError("duplicate 'metrics' section", section.line)
            metrics = _parse_metrics_section(section)
        elif section.name == "traffic":
            if traffic is not None:
                raise FormatError("duplicate 'traffic' section", section.line)
            traffic = _parse_traffic_section(section)
        else:
            raise FormatError(f"unknown section {section.name!r}", section.line)

    assert desc is not None
    desc.groups = groups
    desc.actions = action_list
    desc.metrics = metrics
    desc.traffic = traffic if traffic is not None else TrafficSpec()
    desc.cleanup = cleanup
    return desc


def parse_study(text: str) -> Study:
    """Parse a study document (a 'study' section listing experiment ids)."""
    version, sections = read_document(text)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}", 1)
    if len(sections) != 1 or sections[0].name != "study":
        line = sections[0].line if sections else 1
        raise FormatError("expected exactly one 'study' section", line)
    section = sections[0]
    _check_keys(section, {"id", "title", "hypothesis", "experiments"})
    ids_value = section.get("experiments", "")
    ids = ids_value.split()
    if not ids:
        raise FormatError("study needs a non-empty ordered 'experiments' list",
                          section.line)
    if len(set(ids)) != len(ids):
        raise FormatError("experiment ids must be unique within a study",
                          section.line)
    for exp_id in ids:
        if not TOKEN_RE.match(exp_id):
            raise FormatError(f"bad experiment id {exp_id!r}", section.line)
    return Study(
        id=_require_token(section, "id"),
        title=_check_text_value(section, "title"),
        hypothesis=_check_text_value(section, "hypothesis"),
        experiments=ids,
    )


# --- canonical serialization ------------------------------------------------

def _entries(pairs: list[tuple[str, str]], line: int = 0) -> list[Entry]:
    return [Entry(k, v, line) for k, v in pairs]


def _action_section(name: str, action: Action) -> Section:
    command = action.command
    if action.params:
        command += " " + format_params(action.params)
    pairs = [
        ("command", command),
        ("start", str(action.start_offset)),
        ("target", action.target),
        ("timeout", str(action.timeout)),
    ]
    return Section(name, None, 0, _entries(pairs))


def serialize(desc: ExperimentDescription) -> str:
    """Canonical text for a description: equal values, identical bytes."""
    _check_serializable(desc)
    sections: list[Section] = []

    pairs = []
    if desc.description:
        pairs.append(("description", desc.description))
    pairs.append(("duration_limit", str(desc.duration_limit)))
    pairs.append(("id", desc.id))
    pairs.append(("replications", str(desc.replications)))
    if desc.title:
        pairs.append(("title", desc.title))
    if desc.topic != "other":
        pairs.append(("topic", desc.topic))
    sections.append(Section("experiment", None, 0, _entries(pairs)))

    for group in desc.groups:
        gpairs = []
        if isinstance(group.selection, StaticSelection):
            gpairs.append(("nodes", " ".join(group.selection.nodes)))
        else:
            gpairs.append(("count", str(group.selection.count)))
            if group.selection.predicate.kind != "random":
                gpairs.append(("predicate", group.selection.predicate.text()))
        gpairs.append(("role", group.role))
        gpairs.sort()
        sections.append(Section("group", group.name, 0, _entries(gpairs)))

    for action in desc.actions:
        sections.append(_action_section("action", action))

    if desc.traffic.pattern != "none" or desc.traffic.params:
        tpairs = [("pattern", desc.traffic.pattern)]
        tpairs += sorted(desc.traffic.params.items())
        tpairs.sort()
        sections.append(Section("traffic", None, 0, _entries(tpairs)))

    if desc.metrics:
        mpairs = []
        for m in desc.metrics:
            attrs = {"aggregation": m.aggregation}
            if m.unit:
                attrs["unit"] = m.unit
            mpairs.append((m.name, format_params(attrs)))
        sections.append(Section("metrics", None, 0, _entries(mpairs)))

    for action in desc.cleanup:
        sections.append(_action_section("cleanup", action))

    return write_document(FORMAT_VERSION, sections)


def serialize_study(study: Study) -> str:
    pairs = []
    pairs.append(("experiments", " ".join(study.experiments)))
    if study.hypothesis:
        pairs.append(("hypothesis", study.hypothesis))
    pairs.append(("id", study.id))
    if study.title:
        pairs.append(("title", study.title))
    return write_document(FORMAT_VERSION, [Section("study", None, 0,
                                                   _entries(pairs))])


def _check_serializable(desc: ExperimentDescription):
    # serialize() promises byte-stable round-trips; reject values the line
    # format cannot carry rather than silently corrupting them
    def check_text(owner, value):
        if any(ord(c) < 32 for c in value):
            raise ValueError(f"{owner} contains control characters")

    def check_token(owner, value):
        if not TOKEN_RE.match(value):
            raise ValueError(f"{owner} must be a plain token, got {value!r}")

    check_token("experiment id", desc.id)
    check_token("topic", desc.topic)
    check_text("title", desc.title)
    check_text("description", desc.description)
    for group in desc.groups:
        check_token("group name", group.name)
        check_token("role", group.role)
        if isinstance(group.selection, StaticSelection):
            for node in group.selection.nodes:
                check_token("node id", node)
        elif group.selection.predicate.kind == "building":
            check_token("predicate building", group.selection.predicate.building)
    for action in desc.actions + desc.cleanup:
        check_token("action target", action.target)
        check_token("command name", action.command)
        for key, value in action.params.items():
            if not sectiontext.KEY_RE.match(key):
                raise ValueError(f"bad parameter name {key!r}")
            check_text(f"parameter {key}", value)
    check_token("traffic pattern", desc.traffic.pattern)
    for key, value in desc.traffic.params.items():
        if not sectiontext.KEY_RE.match(key) or key == "pattern":
            raise ValueError(f"bad traffic parameter name {key!r}")
        check_text(f"traffic parameter {key}", value)
    for m in desc.metrics:
        check_token("metric name", m.name)
        check_token("aggregation", m.aggregation)
        check_text("unit", m.unit)


# --- group resolution ----------------------------------------------------------

class GroupResolutionError(Exception):
    def __init__(self, group: str, candidates: int, requested: int):
        super().__init__(f"group {group}: {candidates} candidates for "
                         f"{requested} requested")
        self.group = group
        self.candidates = candidates
        self.requested = requested


def resolve_groups(desc: ExperimentDescription, inventory,
                   chooser=None) -> dict[str, tuple[str, ...]]:
    """Bind every group to concrete node ids.

    Static groups bind first, then attribute predicates first-fit in
    inventory order, then `random` groups (chooser picks from the remaining
    pool; defaults to first-fit). The validator dry-runs this exact
    procedure, so a description it accepts never fails resolution against
    the same inventory snapshot.
    """
    nodes = lift_inventory(inventory)
    taken: set[str] = set()
    result: dict[str, tuple[str, ...]] = {}

    for group in desc.groups:
        if isinstance(group.selection, StaticSelection):
            result[group.name] = tuple(group.selection.nodes)
            taken.update(group.selection.nodes)

    def fill(group, candidates):
        count = group.selection.count
        if len(candidates) < count:
            raise GroupResolutionError(group.name, len(candidates), count)
        if group.selection.predicate.kind == "random" and chooser is not None:
            picked = chooser(group, candidates, count)
        else:
            picked = candidates[:count]
        result[group.name] = tuple(picked)
        taken.update(picked)

    for group in desc.groups:
        if (isinstance(group.selection, DynamicSelection)
                and group.selection.predicate.kind != "random"):
            candidates = [n.id for n in nodes
                          if n.id not in taken
                          and group.selection.predicate.matches(n)]
            fill(group, candidates)

    for group in desc.groups:
        if (isinstance(group.selection, DynamicSelection)
                and group.selection.predicate.kind == "random"):
            candidates = [n.id for n in nodes if n.id not in taken]
            fill(group, candidates)

    return result


# --- validation --------------------------------------------------------------

def lift_inventory(inventory) -> list[InventoryNode]:
    """Accept InventoryNode sequences or bare id strings."""
    lifted = []
    for item in inventory:
        if isinstance(item, InventoryNode):
            lifted.append(item)
        else:
            lifted.append(InventoryNode(id=str(item)))
    return lifted


def validate(desc: ExperimentDescription, inventory) -> ValidationReport:
    """Static schedulability check against an inventory snapshot.

    An empty-error report means the orchestrator can resolve and schedule the
    description against the same snapshot: every group resolves to at least
    one node, totals fit the inventory, replications and offsets are in range,
    and every command is in the registered vocabulary.
    """
    nodes = lift_inventory(inventory)
    by_id = {n.id: n for n in nodes}
    report = ValidationReport()

    def error(code, location, message):
        report.errors.append(ValidationIssue(code, location, message))

    def warn(code, location, message):
        report.warnings.append(ValidationIssue(code, location, message))

    if desc.replications < 1:
        error("REPLICATIONS_POSITIVE", "experiment",
              f"replications must be >= 1, got {desc.replications}")
    if desc.duration_limit < 1:
        error("DURATION_POSITIVE", "experiment",
              f"duration_limit must be >= 1, got {desc.duration_limit}")

    total_static: set[str] = set()
    total_dynamic = 0
    groups_ok = True
    for group in desc.groups:
        loc = f"group {group.name}"
        if group.role not in ROLES:
            error("BAD_ROLE", loc,
                  f"role must be one of {', '.join(ROLES)}, got {group.role!r}")
        if isinstance(group.selection, StaticSelection):
            ids = group.selection.nodes
            if not ids:
                error("GROUP_EMPTY", loc, "static group selects no nodes")
                groups_ok = False
            if len(set(ids)) != len(ids):
                error("DUPLICATE_NODE", loc, "static node list has duplicates")
                groups_ok = False
            unknown = [i for i in ids if i not in by_id]
            if unknown:
                error("UNKNOWN_NODE", loc,
                      f"nodes not in inventory: {', '.join(sorted(unknown))}")
                groups_ok = False
            total_static.update(ids)
        else:
            count = group.selection.count
            if count < 1:
                error("COUNT_POSITIVE", loc, f"count must be >= 1, got {count}")
                groups_ok = False
            else:
                total_dynamic += count

    total = len(total_static) + total_dynamic
    if total > len(nodes):
        error("TOO_MANY_NODES", "experiment",
              f"{total} nodes requested, {len(nodes)} in inventory")

    if groups_ok:
        # schedulability is exactly resolvability: dry-run the same group
        # resolution the orchestrator performs
        try:
            resolve_groups(desc, nodes)
        except GroupResolutionError as err:
            error("GROUP_UNSATISFIABLE", f"group {err.group}",
                  f"{err.candidates} candidate nodes for {err.requested} "
                  f"requested (after earlier groups are bound)")

    group_names = {g.name for g in desc.groups}
    vocabulary = set(actions.schedulable_names())
    numbered = ([("action", i + 1, a) for i, a in enumerate(desc.actions)]
                + [("cleanup", i + 1, a) for i, a in enumerate(desc.cleanup)])
    for kind, num, action in numbered:
        loc = f"{kind} {num}"
        if action.target not in group_names and action.target not in by_id:
            error("GROUP_UNDECLARED", loc,
                  f"target {action.target!r} is neither a declared group nor an "
                  f"inventory node")
        if action.command not in vocabulary:
            error("UNKNOWN_COMMAND", loc, f"command {action.command!r} is not in "
                  f"the registered vocabulary")
        else:
            for problem in actions.check_params(action.command, action.params):
                error("BAD_PARAM", loc, problem)
        if action.timeout < 1:
            error("TIMEOUT_POSITIVE", loc,
                  f"timeout must be > 0, got {action.timeout}")
        if kind == "action":
            if action.start_offset > desc.duration_limit:
                error("OFFSET_RANGE", loc,
                      f"start offset {action.start_offset} exceeds duration limit "
                      f"{desc.duration_limit}")
            elif action.start_offset + action.timeout > desc.duration_limit:
                warn("TIMEOUT_PAST_LIMIT", loc,
                     "action may still be waiting at the duration limit")

    if desc.traffic.pattern not in TRAFFIC_PATTERNS:
        error("BAD_TRAFFIC", "traffic",
              f"pattern must be one of {', '.join(TRAFFIC_PATTERNS)}")

    seen_metrics = set()
    for m in desc.metrics:
        if m.name in seen_metrics:
            error("DUPLICATE_METRIC", f"metric {m.name}",
                  "metric names must be unique within an experiment")
        seen_metrics.add(m.name)
        if m.aggregation not in AGGREGATIONS:
            error("BAD_AGGREGATION", f"metric {m.name}",
                  f"aggregation must be one of {', '.join(AGGREGATIONS)}")

    if not desc.actions:
        warn("NO_ACTIONS", "experiment", "description declares no actions")

    return report


def validate_study(study: Study) -> ValidationReport:
    report = ValidationReport()
    if not study.experiments:
        report.errors.append(ValidationIssue(
            "STUDY_EMPTY", "study", "experiment list must be non-empty"))
    if len(set(study.experiments)) != len(study.experiments):
        report.errors.append(ValidationIssue(
            "STUDY_DUPLICATE", "study", "experiment ids must be unique"))
    return report
