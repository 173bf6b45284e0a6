import threading

import pytest

from meshbed.config import ServiceConfig, TokenInfo
from meshbed.fleet import FleetConfig
from meshbed.portal import PortalServer, ServiceStack

MINIMAL_DESC = """\
format: 1

experiment
  id: smoke-1
  replications: 1
  duration_limit: 600

group g
  role: client
  nodes: n1

action
  target: g
  command: noop
"""


@pytest.fixture
def portal_stack(tmp_path):
    """A full service stack (no pacer: tests drive virtual time directly)."""
    config = ServiceConfig(
        fleet=FleetConfig.generated(6, buildings=2, seed=0),
        poll_cadence_s=60,
        pace=0.0,
        tokens={
            "tok-alice": TokenInfo("tok-alice", "alice", "experimenter"),
            "tok-root": TokenInfo("tok-root", "root", "admin"),
            "tok-old": TokenInfo("tok-old", "old", "experimenter", expires=1),
        },
    )
    stack = ServiceStack(config, store_path=str(tmp_path / "portal.log"))
    yield stack
    stack.store.close()


@pytest.fixture
def portal_server(portal_stack):
    server = PortalServer(portal_stack, port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server
    server.shutdown()
    server.server_close()
