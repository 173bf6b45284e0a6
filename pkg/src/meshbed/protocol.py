"""Control protocol between the management plane and the fleet.

The orchestrator and the monitor never touch a Fleet object directly: they
speak a line-oriented request/response protocol over a byte transport, the
stand-in for a real deployment's management backbone. Each message is one
canonical JSON document terminated by a newline (docs/control-protocol.md).

Operations: EXEC (run an action on a node), POLL (node state snapshot),
ADVANCE (move the virtual clock), INVENTORY (node listing and defaults).

The default transport is an in-process function call carrying bytes; the
framing makes it trivial to put a socket in the middle instead.
"""

import json

from .fleet import Fleet, FleetError
from .util import canonical_json

OPS = ("EXEC", "POLL", "ADVANCE", "INVENTORY")


class ControlError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


def encode_request(op: str, **fields) -> bytes:
    doc = {"op": op, **fields}
    return canonical_json(doc).encode("utf-8") + b"\n"


def encode_response(ok: bool, body) -> bytes:
    doc = {"ok": ok, ("result" if ok else "error"): body}
    return canonical_json(doc).encode("utf-8") + b"\n"


def decode_line(line: bytes) -> dict:
    try:
        doc = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise ControlError("BAD_MESSAGE", f"undecodable message: {err}") from err
    if not isinstance(doc, dict):
        raise ControlError("BAD_MESSAGE", "message must be a JSON object")
    return doc


class ControlServer:
    """Fleet-side endpoint: bytes in, bytes out."""

    def __init__(self, fleet: Fleet):
        self.fleet = fleet

    def handle_line(self, line: bytes) -> bytes:
        try:
            request = decode_line(line)
            return encode_response(True, self._dispatch(request))
        except (ControlError, FleetError) as err:
            return encode_response(False, {"code": err.code, "message": str(err)})

    def _dispatch(self, request: dict):
        op = request.get("op")
        if op == "EXEC":
            action = request.get("action") or {}
            result = self.fleet.execute(
                node_id=request.get("node", ""),
                command=action.get("command", ""),
                params=action.get("params", {}),
                timeout=int(action.get("timeout", 60)),
                stream_key=request.get("stream"),
            )
            return result.to_doc()
        if op == "POLL":
            return self.fleet.poll(request.get("node", ""))
        if op == "ADVANCE":
            dt = request.get("dt", 0)
            if not isinstance(dt, int) or dt < 0:
                raise ControlError("BAD_MESSAGE", "dt must be a non-negative integer")
            events = self.fleet.advance(dt)
            return {"now": self.fleet.now, "events": events}
        if op == "INVENTORY":
            return {
                "now": self.fleet.now,
                "default_channel": self.fleet.baseline_config_tuple()[0],
                "nodes": self.fleet.inventory(),
            }
        raise ControlError("BAD_OP", f"unknown operation {op!r}")


class ControlClient:
    """Management-plane endpoint. transport: bytes -> bytes, one line each way."""

    def __init__(self, transport):
        self._transport = transport

    @classmethod
    def local(cls, fleet: Fleet) -> "ControlClient":
        return cls(ControlServer(fleet).handle_line)

    def _call(self, op: str, **fields):
        reply = decode_line(self._transport(encode_request(op, **fields)))
        if reply.get("ok"):
            return reply.get("result")
        error = reply.get("error") or {}
        raise ControlError(error.get("code", "UNKNOWN"),
                           error.get("message", "control request failed"))

    def exec(self, node: str, command: str, params: dict[str, str],
             timeout: int, stream: str | None = None) -> dict:
        action = {"command": command, "params": params, "timeout": timeout}
        fields = {"node": node, "action": action}
        if stream is not None:
            fields["stream"] = stream
        return self._call("EXEC", **fields)

    def poll(self, node: str) -> dict:
        return self._call("POLL", node=node)

    def advance(self, dt: int) -> dict:
        return self._call("ADVANCE", dt=dt)

    def inventory(self) -> dict:
        return self._call("INVENTORY")
