"""Newline-delimited JSON transport for out-of-process agents.

Every line is one JSON document.  Negotiation messages use the engine's
wire schema ({kind, negotiation_id, sender, round, payload}, kinds being
the six lowercase primitives); everything else travels as small control
documents ({"control": ...}).  The server answers malformed JSON and
unknown message kinds with an error document and keeps the connection
open.  Delivery per connection is FIFO; the scheduler blocks on each
reply, which is what makes a networked run byte-for-byte equal to the
in-process one.
"""

from __future__ import annotations

import json
import socket
import threading
from dataclasses import dataclass

from . import engine
from .engine import (
    FinalizeDecision,
    Message,
    MessageKind,
    ProtocolViolation,
    StrategyRegistry,
)
from .repository import Role
from .scenario import Scenario
from .simulation import (
    AgentProfile,
    BilateralSpec,
    FinalizeCandidate,
    LocalResponder,
    RunResult,
    encode_line,
    run_scenario,
)

CONNECT_TIMEOUT = 30.0


class WireError(Exception):
    pass


def encode_message(message: Message) -> str:
    return encode_line(message.to_wire())


def decode_document(line: str) -> dict:
    try:
        data = json.loads(line)
    except json.JSONDecodeError as exc:
        raise WireError(f"malformed json: {exc}") from exc
    if not isinstance(data, dict):
        raise WireError("expected a JSON object per line")
    return data


class LineChannel:
    """Blocking line-oriented channel over a socket."""

    def __init__(self, sock: socket.socket) -> None:
        self._sock = sock
        self._rfile = sock.makefile("rb")
        self._lock = threading.Lock()

    def send(self, document: dict) -> None:
        with self._lock:
            self._sock.sendall((encode_line(document) + "\n").encode("utf-8"))

    def receive_raw(self) -> str | None:
        line = self._rfile.readline()
        if not line:
            return None
        return line.decode("utf-8").rstrip("\n")

    def receive(self) -> dict:
        """Next well-formed document; error replies go out for bad lines."""
        while True:
            raw = self.receive_raw()
            if raw is None:
                raise WireError("connection closed")
            if not raw.strip():
                continue
            try:
                return decode_document(raw)
            except WireError as exc:
                self.send({"error": "malformed json", "detail": str(exc)})

    def receive_message(self) -> Message | None:
        """Next negotiation message; None when the peer passes.

        Documents that are neither a valid message nor a pass get an error
        reply and the channel keeps listening.
        """
        while True:
            data = self.receive()
            if data.get("control") == "pass":
                return None
            if "kind" in data:
                try:
                    return Message.from_wire(data)
                except ProtocolViolation as exc:
                    self.send({"error": "protocol", "detail": str(exc)})
                    continue
            self.send({"error": "protocol", "detail": "expected a message or pass"})

    def close(self) -> None:
        try:
            self._rfile.close()
        finally:
            self._sock.close()


class RemoteResponder:
    """Server-side stand-in for an agent living across a socket."""

    def __init__(self, agent_id: str, role: Role, channel: LineChannel) -> None:
        self.agent_id = agent_id
        self.role = role
        self.channel = channel

    def _expect_ok(self) -> None:
        data = self.channel.receive()
        if data.get("control") != "ok":
            raise WireError(f"{self.agent_id}: expected ok, got {data}")

    def open_bilateral(self, spec: BilateralSpec, product) -> None:
        self.channel.send({
            "control": "open",
            "negotiation_id": spec.negotiation_id,
            "product_id": spec.product_id,
            "buyer_id": spec.buyer_id,
            "seller_id": spec.seller_id,
            "round_limit": spec.round_limit,
        })
        self._expect_ok()

    def make_initial_offer(self, negotiation_id: str) -> Message:
        self.channel.send({"control": "turn", "negotiation_id": negotiation_id})
        message = self.channel.receive_message()
        if message is None:
            raise WireError(f"{self.agent_id} passed on its opening offer")
        return message

    def respond(self, message: Message) -> Message | None:
        self.channel.send(message.to_wire())
        return self.channel.receive_message()

    def close(self, message: Message) -> Message | None:
        self.channel.send(message.to_wire())
        return self.channel.receive_message()

    def decide_finalize(self, candidates: list[FinalizeCandidate]) -> FinalizeDecision:
        totals = {c.peer_id: c.total for c in candidates}
        chosen = engine.best_peer(self.role, totals)
        by_peer = {c.peer_id: c for c in candidates}
        chosen_candidate = by_peer[chosen]
        finalize_msg = Message(MessageKind.FINALIZE, chosen_candidate.negotiation_id,
                               self.agent_id, chosen_candidate.round)
        declines = tuple(
            Message(MessageKind.DECLINE, c.negotiation_id, self.agent_id, c.round)
            for c in candidates if c.peer_id != chosen
        )
        for message in (finalize_msg, *declines):
            self._notify(message.negotiation_id,
                         "finalize_sent" if message.kind is MessageKind.FINALIZE
                         else "decline_sent")
        return FinalizeDecision(chosen_peer=chosen, finalize_message=finalize_msg,
                                decline_messages=declines, totals=totals)

    def make_decline(self, negotiation_id: str, round_hint: int = 0) -> Message:
        self._notify(negotiation_id, "decline_sent")
        return Message(MessageKind.DECLINE, negotiation_id, self.agent_id, round_hint)

    def _notify(self, negotiation_id: str, event: str) -> None:
        self.channel.send({"control": "note", "negotiation_id": negotiation_id,
                           "event": event})
        self._expect_ok()

    def state_digest(self, negotiation_id: str):
        return None

    def finish(self) -> None:
        try:
            self.channel.send({"control": "done"})
            self.channel.receive()
        except (WireError, OSError):
            pass
        self.channel.close()


@dataclass
class ServeResult:
    run: RunResult
    port: int


def serve_scenario(
    scenario: Scenario,
    remote_agents: list[str],
    host: str = "127.0.0.1",
    port: int = 0,
    ready: threading.Event | None = None,
    port_holder: list[int] | None = None,
) -> ServeResult:
    """Run one scenario with the listed agents joined over the wire.

    Binds, waits for a hello from every remote agent, then drives the
    normal scheduler with their responders backed by the connections.
    """
    roles = {setup.record.agent_id: setup.record.role for setup in scenario.agents}
    unknown = [a for a in remote_agents if a not in roles]
    if unknown:
        raise WireError(f"remote agents not in scenario: {unknown}")

    server = socket.create_server((host, port))
    server.settimeout(CONNECT_TIMEOUT)
    bound_port = server.getsockname()[1]
    if port_holder is not None:
        port_holder.append(bound_port)
    if ready is not None:
        ready.set()

    channels: dict[str, LineChannel] = {}
    try:
        while set(channels) != set(remote_agents):
            conn, _addr = server.accept()
            conn.settimeout(CONNECT_TIMEOUT)
            channel = LineChannel(conn)
            hello = channel.receive()
            agent_id = hello.get("agent_id")
            if hello.get("control") != "hello" or agent_id not in remote_agents:
                channel.send({"error": "protocol",
                              "detail": f"unexpected hello {hello}"})
                channel.close()
                continue
            channel.send({"control": "ok"})
            channels[agent_id] = channel

        responders = {
            agent_id: RemoteResponder(agent_id, roles[agent_id], channel)
            for agent_id, channel in channels.items()
        }
        result = run_scenario(scenario, remote_responders=responders)
        return ServeResult(run=result, port=bound_port)
    finally:
        server.close()


class WireAgentClient:
    """A scripted remote agent: the in-process engine behind a socket.

    Connects, introduces itself, then answers every delivered line with
    exactly one reply line until the server says done.
    """

    def __init__(self, scenario: Scenario, agent_id: str,
                 host: str, port: int) -> None:
        setup = next((s for s in scenario.agents if s.record.agent_id == agent_id), None)
        if setup is None:
            raise WireError(f"agent {agent_id} not in scenario")
        self.scenario = scenario
        self.agent_id = agent_id
        profile = AgentProfile(record=setup.record, product_id=setup.product_id,
                               valuations=dict(setup.valuations),
                               validity=setup.validity,
                               strategy_name=setup.strategy)
        self.local = LocalResponder(profile, StrategyRegistry())
        self.host = host
        self.port = port

    def run(self) -> None:
        sock = socket.create_connection((self.host, self.port),
                                        timeout=CONNECT_TIMEOUT)
        channel = LineChannel(sock)
        try:
            channel.send({"control": "hello", "agent_id": self.agent_id})
            ack = channel.receive()
            if ack.get("control") != "ok":
                raise WireError(f"hello rejected: {ack}")
            while True:
                data = channel.receive()
                if "error" in data:
                    continue
                if "control" in data:
                    if not self._handle_control(channel, data):
                        return
                    continue
                self._handle_message(channel, data)
        finally:
            channel.close()

    def _handle_control(self, channel: LineChannel, data: dict) -> bool:
        control = data["control"]
        if control == "open":
            spec = BilateralSpec(
                negotiation_id=data["negotiation_id"],
                group_id=data["negotiation_id"].split(":", 1)[0],
                product_id=data["product_id"],
                buyer_id=data["buyer_id"],
                seller_id=data["seller_id"],
                round_limit=int(data["round_limit"]),
            )
            self.local.open_bilateral(spec, self.scenario.product(spec.product_id))
            channel.send({"control": "ok"})
        elif control == "turn":
            offer = self.local.make_initial_offer(data["negotiation_id"])
            channel.send(offer.to_wire())
        elif control == "note":
            session = self.local.sessions.get(data["negotiation_id"])
            if session is not None:
                session.status = (engine.SessionStatus.FINALIZED
                                  if data["event"] == "finalize_sent"
                                  else engine.SessionStatus.DECLINED)
            channel.send({"control": "ok"})
        elif control == "done":
            channel.send({"control": "ok"})
            return False
        else:
            channel.send({"error": "protocol", "detail": f"unknown control {control}"})
        return True

    def _handle_message(self, channel: LineChannel, data: dict) -> None:
        try:
            message = Message.from_wire(data)
        except ProtocolViolation as exc:
            channel.send({"error": "protocol", "detail": str(exc)})
            return
        if message.kind in (MessageKind.FINALIZE, MessageKind.DECLINE):
            reply = self.local.close(message)
        else:
            reply = self.local.respond(message)
        if reply is None:
            channel.send({"control": "pass"})
        else:
            channel.send(reply.to_wire())


def run_remote_agent_in_thread(scenario: Scenario, agent_id: str,
                               host: str, port: int) -> threading.Thread:
    client = WireAgentClient(scenario, agent_id, host, port)
    thread = threading.Thread(target=client.run, daemon=True)
    thread.start()
    return thread


__all__ = [
    "CONNECT_TIMEOUT",
    "LineChannel",
    "RemoteResponder",
    "ServeResult",
    "WireAgentClient",
    "WireError",
    "decode_document",
    "encode_message",
    "run_remote_agent_in_thread",
    "serve_scenario",
]
