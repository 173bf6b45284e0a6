"""Registry of node actions the fleet understands.

This is the single vocabulary consulted by the description validator and
implemented by the fleet's executor. Entries marked non-schedulable are
management-plane actions (used by prepare/cleanup) that experiment
descriptions may not invoke directly.

``critical`` marks the measurement-bearing actions whose failure fails the
whole replication; auxiliary actions merely record their failure.
"""

from dataclasses import dataclass, field


@dataclass(frozen=True)
class ParamSpec:
    required: bool = False
    kind: str = "str"          # str | int | float | choice
    choices: tuple[str, ...] = ()
    default: str | None = None


@dataclass(frozen=True)
class ActionSpec:
    name: str
    params: dict[str, ParamSpec] = field(default_factory=dict)
    emits_metrics: bool = False
    critical: bool = False
    schedulable: bool = True


REGISTRY: dict[str, ActionSpec] = {
    spec.name: spec
    for spec in [
        ActionSpec("noop"),
        ActionSpec(
            "set_channel",
            params={"channel": ParamSpec(required=True, kind="int")},
        ),
        ActionSpec(
            "start_traffic",
            params={
                "dest": ParamSpec(required=True),
                "pattern": ParamSpec(kind="choice", choices=("cbr", "burst"),
                                     default="cbr"),
                "packets": ParamSpec(kind="int", default="100"),
                "duration": ParamSpec(kind="int", default="10"),
            },
            emits_metrics=True,
            critical=True,
        ),
        ActionSpec("stop_traffic"),
        ActionSpec(
            "ping_flood",
            params={
                "dest": ParamSpec(required=True),
                "count": ParamSpec(kind="int", default="10"),
            },
            emits_metrics=True,
            critical=True,
        ),
        ActionSpec("reset_config", schedulable=False),
    ]
}


def schedulable_names() -> list[str]:
    return sorted(name for name, spec in REGISTRY.items() if spec.schedulable)


def check_params(command: str, params: dict[str, str]) -> list[str]:
    """Return a list of human-readable parameter problems (empty if fine)."""
    spec = REGISTRY.get(command)
    if spec is None:
        return [f"unknown command {command!r}"]
    problems = []
    for name, pspec in spec.params.items():
        if pspec.required and name not in params:
            problems.append(f"missing required parameter {name!r}")
    for name, value in params.items():
        pspec = spec.params.get(name)
        if pspec is None:
            problems.append(f"unknown parameter {name!r}")
            continue
        if pspec.kind == "int":
            if not value.isdigit():
                problems.append(f"parameter {name!r} must be a non-negative integer")
        elif pspec.kind == "float":
            try:
                float(value)
            except ValueError:
                problems.append(f"parameter {name!r} must be a number")
        elif pspec.kind == "choice" and value not in pspec.choices:
            problems.append(
                f"parameter {name!r} must be one of {', '.join(pspec.choices)}")
    return problems


def effective_params(command: str, params: dict[str, str]) -> dict[str, str]:
    """Merge declared defaults under the caller's parameters."""
    spec = REGISTRY[command]
    merged = {name: pspec.default for name, pspec in spec.params.items()
              if pspec.default is not None}
    merged.update(params)
    return merged
