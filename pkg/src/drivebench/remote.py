"""Out-of-process agents: resolve ``ext:host:port`` names onto wire sessions.

An external process (any language) implements the agent lifecycle over the
same binary envelope the world server uses, in the 0x20 message range:
AGENT_HELLO declares the rig, AGENT_SETUP forwards both route forms plus the
parameter set, AGENT_STEP exchanges one SensorFrame for one ControlAction,
AGENT_DESTROY drops agent state but keeps the process alive.  From the
harness's point of view an ``ext:`` agent behaves exactly like a built-in
one; a stalled remote step simply follows the normal safe-stop path.
"""

from __future__ import annotations

import socket

from . import codec
from .agents import Agent, AgentConfig, AgentDescriptor, ResolvedAgent
from .core import ControlAction, validate_control
from .errors import MalformedName, NotInitialized
from .sensors import SensorFrame, SensorSpec
from .wire import (
    AGENT_DESTROY,
    AGENT_HELLO,
    AGENT_SETUP,
    AGENT_STEP,
    MessageChannel,
)

EXT_PREFIX = "ext:"


def _parse_endpoint(name: str) -> tuple[str, int]:
    rest = name[len(EXT_PREFIX):]
    host, sep, port_text = rest.rpartition(":")
    if not sep or not host:
        raise MalformedName(name, "expected ext:host:port")
    try:
        port = int(port_text)
    except ValueError:
        raise MalformedName(name, f"bad port {port_text!r}") from None
    if not (0 < port < 65536):
        raise MalformedName(name, f"port {port} out of range")
    return host, port


class RemoteAgent(Agent):
    """Harness-side proxy for one external agent process."""

    def __init__(self, name: str):
        self.name = name
        self._host, self._port = _parse_endpoint(name)
        self._channel: MessageChannel | None = None
        self._rig: tuple[SensorSpec, ...] | None = None
        self._ready = False

    def _connect(self) -> MessageChannel:
        if self._channel is None:
            sock = socket.create_connection((self._host, self._port))
            self._channel = MessageChannel(sock)
            r = codec.Reader(self._channel.request(AGENT_HELLO))
            self._rig = tuple(codec.read_sensor_spec(r) for _ in range(r.u32()))
        return self._channel

    def required_rig(self) -> tuple[SensorSpec, ...]:
        self._connect()
        return self._rig

    def setup(self, config: AgentConfig) -> None:
        channel = self._connect()
        w = codec.Writer()
        w.string(self.name)
        codec.write_parameters(w, config.parameters)
        codec.write_dense_route(w, config.dense_route)
        codec.write_geo_route(w, config.geo_route)
        channel.request(AGENT_SETUP, w.getvalue())
        self._ready = True

    def run_step(self, frame: SensorFrame) -> ControlAction:
        if not self._ready or self._channel is None:
            raise NotInitialized("remote agent not set up")
        w = codec.Writer()
        codec.write_sensor_frame(w, frame)
        r = codec.Reader(self._channel.request(AGENT_STEP, w.getvalue()))
        return validate_control(codec.read_control(r))

    def destroy(self) -> None:
        channel, self._channel = self._channel, None
        ready, self._ready = self._ready, False
        if channel is None:
            return
        if ready:
            # best effort; a stalled peer must not hang the teardown
            channel.try_request(AGENT_DESTROY)
        channel.shutdown()


def resolve_external(name: str) -> ResolvedAgent:
    """Factory for ``ext:host:port`` names; connection happens at setup time."""
    host, port = _parse_endpoint(name)  # validate the shape eagerly
    descriptor = AgentDescriptor(family="ext", variant=f"{host}:{port}")
    agent = RemoteAgent(name)
    return ResolvedAgent(descriptor=descriptor, parameters={},
                         rig=(), factory=lambda: agent)


def register_external(name: str) -> ResolvedAgent:
    """Explicit registration entry point; equivalent to resolve_agent(name)."""
    if not name.startswith(EXT_PREFIX):
        raise MalformedName(name, f"expected prefix {EXT_PREFIX!r}")
    return resolve_external(name)
