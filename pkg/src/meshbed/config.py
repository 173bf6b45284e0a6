"""Service configuration files (``.cfg``, same sectioned text as ``.desc``).

Sections: ``service`` (port, poll cadence, pacing), ``fleet`` (size,
buildings, churn calibration, seed), optional ``workload`` (the headless
scenario the simulate command runs), and one ``token <value>`` section per
API credential.
"""

from dataclasses import dataclass, field

from .fleet import ChurnParams, FleetConfig
from .sectiontext import FormatError, read_document

FORMAT_VERSION = 1


@dataclass
class TokenInfo:
    token: str
    user: str
    role: str = "experimenter"         # experimenter | admin
    expires: int | None = None


@dataclass
class WorkloadConfig:
    experiments: int
    horizon_s: int
    seed: int | None = None
    max_nodes: int | None = None
    mean_nodes: float | None = None
    max_replications: int = 3


@dataclass
class ServiceConfig:
    fleet: FleetConfig
    port: int = 8340
    host: str = "127.0.0.1"
    poll_cadence_s: int = 60
    pace: float = 1.0                  # virtual seconds per wall second
    seed: int = 0
    prepare_retries: int = 3
    retry_delay_s: int = 10
    workload: WorkloadConfig | None = None
    tokens: dict[str, TokenInfo] = field(default_factory=dict)


def _get_int(section, key, default):
    value = section.get(key)
    if value is None:
        return default
    try:
        return int(value)
    except ValueError:
        raise FormatError(f"{key} must be an integer", section.line)


def _get_float(section, key, default):
    value = section.get(key)
    if value is None:
        return default
    try:
        return float(value)
    except ValueError:
        raise FormatError(f"{key} must be a number", section.line)


def parse_config(text: str) -> ServiceConfig:
    version, sections = read_document(text)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}", 1)

    service = None
    fleet_section = None
    workload_section = None
    tokens: dict[str, TokenInfo] = {}
    for section in sections:
        if section.name == "service":
            service = section
        elif section.name == "fleet":
            fleet_section = section
        elif section.name == "workload":
            workload_section = section
        elif section.name == "token":
            if not section.arg:
                raise FormatError("token section needs the token value as its "
                                  "argument", section.line)
            tokens[section.arg] = TokenInfo(
                token=section.arg,
                user=section.get("user", "anonymous"),
                role=section.get("role", "experimenter"),
                expires=_get_int(section, "expires", None),
            )
        else:
            raise FormatError(f"unknown section {section.name!r}", section.line)

    if fleet_section is None:
        raise FormatError("config needs a 'fleet' section", 1)
    seed = _get_int(fleet_section, "seed", 0)
    availability = _get_float(fleet_section, "availability", None)
    watchdog = _get_int(fleet_section, "watchdog_s", 3600)
    fleet_config = FleetConfig.generated(
        _get_int(fleet_section, "nodes", 16),
        buildings=_get_int(fleet_section, "buildings", 4),
        seed=seed,
        availability=availability,
        mean_up_h=_get_float(fleet_section, "mean_up_h", 48.0),
        watchdog_s=watchdog,
    )
    if availability is None and fleet_section.get("mean_down_s") is not None:
        fleet_config.churn = ChurnParams(
            _get_float(fleet_section, "mean_up_h", 48.0) * 3600.0,
            _get_float(fleet_section, "mean_down_s", 600.0))

    workload = None
    if workload_section is not None:
        workload = WorkloadConfig(
            experiments=_get_int(workload_section, "experiments", 20),
            horizon_s=_get_int(workload_section, "horizon_days", 7) * 86400,
            seed=_get_int(workload_section, "seed", None),
            max_nodes=_get_int(workload_section, "max_nodes", None),
            mean_nodes=_get_float(workload_section, "mean_nodes", None),
            max_replications=_get_int(workload_section, "max_replications", 3),
        )

    config = ServiceConfig(fleet=fleet_config, tokens=tokens, seed=seed,
                           workload=workload)
    if service is not None:
        config.port = _get_int(service, "port", config.port)
        config.host = service.get("host", config.host)
        config.poll_cadence_s = _get_int(service, "poll_cadence",
                                         config.poll_cadence_s)
        config.pace = _get_float(service, "pace", config.pace)
        config.prepare_retries = _get_int(service, "prepare_retries",
                                          config.prepare_retries)
        config.retry_delay_s = _get_int(service, "retry_delay_s",
                                        config.retry_delay_s)
    return config
