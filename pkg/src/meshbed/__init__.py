"""meshbed: a testbed management system for wireless multi-hop experiments.

The package realizes the full experimentation workflow against a
deterministic simulated node fleet: formal experiment descriptions
(`descript`), an append-only central data store (`store`), the fleet
simulation and its control protocol (`fleet`, `protocol`), scheduled
replicated execution (`orchestrator`), independent monitoring (`monitor`),
statistics and reporting (`stats`, `evaluation`), and the HTTP portal plus
CLI (`portal`, `cli`).
"""

__version__ = "0.1.0"
