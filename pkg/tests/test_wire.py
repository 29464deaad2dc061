"""Socket transport: remote agents, framing errors, transport equivalence."""

from __future__ import annotations

import json
import socket
import threading

import pytest

from parley.scenario import scenario_from_dict
from parley.simulation import run_scenario
from parley.wire import (
    LineChannel,
    WireAgentClient,
    WireError,
    decode_document,
    run_remote_agent_in_thread,
    serve_scenario,
)

from conftest import simple_scenario_doc


def run_over_wire(doc: dict, remote_agents: list[str]):
    """Serve the scenario and join the given agents from client threads."""
    ready = threading.Event()
    ports: list[int] = []
    outcome: dict = {}

    def server():
        try:
            outcome["result"] = serve_scenario(
                scenario_from_dict(doc), remote_agents,
                ready=ready, port_holder=ports)
        except Exception as exc:  # surfaced by the asserting test
            outcome["error"] = exc

    server_thread = threading.Thread(target=server)
    server_thread.start()
    assert ready.wait(10)
    clients = [run_remote_agent_in_thread(scenario_from_dict(doc), agent,
                                          "127.0.0.1", ports[0])
               for agent in remote_agents]
    server_thread.join(30)
    for client in clients:
        client.join(10)
    if "error" in outcome:
        raise outcome["error"]
    return outcome["result"]


class TestTransportEquivalence:
    def test_remote_buyer_same_transcript(self):
        doc = simple_scenario_doc()
        local = run_scenario(scenario_from_dict(doc))
        served = run_over_wire(doc, ["B1"])
        assert served.run.transcript_lines == local.transcript_lines

    def test_remote_seller_same_transcript(self):
        doc = simple_scenario_doc()
        local = run_scenario(scenario_from_dict(doc))
        served = run_over_wire(doc, ["S1"])
        assert served.run.transcript_lines == local.transcript_lines

    def test_both_parties_remote(self):
        doc = simple_scenario_doc()
        local = run_scenario(scenario_from_dict(doc))
        served = run_over_wire(doc, ["S1", "B1"])
        assert served.run.transcript_lines == local.transcript_lines

    def test_remote_buyer_with_competing_sellers(self):
        # the remote party holds several sessions, so its finalize/decline
        # fan-out travels over the wire too
        doc = simple_scenario_doc()
        doc["agents"].append({
            "agent_id": "S2", "role": "seller", "product_id": "P1",
            "valuations": {
                "price": {"actual_cost": 90, "cost_with_margin": 140},
                "support": {"actual_cost": 25, "cost_with_margin": 45}}})
        local = run_scenario(scenario_from_dict(doc))
        served = run_over_wire(doc, ["B1"])
        assert served.run.transcript_lines == local.transcript_lines

    def test_unknown_remote_agent_rejected(self):
        doc = simple_scenario_doc()
        with pytest.raises(WireError):
            serve_scenario(scenario_from_dict(doc), ["GHOST"])


def _start_server(doc, remote=("B1",)):
    ready = threading.Event()
    ports: list[int] = []
    outcome: dict = {}

    def server():
        try:
            outcome["result"] = serve_scenario(
                scenario_from_dict(doc), list(remote), ready=ready,
                port_holder=ports)
        except Exception as exc:
            outcome["error"] = exc

    thread = threading.Thread(target=server)
    thread.start()
    assert ready.wait(10)
    return thread, ports[0], outcome


class _Script:
    """Hand-rolled client speaking raw lines over one shared channel."""

    def __init__(self, port: int) -> None:
        self.sock = socket.create_connection(("127.0.0.1", port), timeout=10)
        self.channel = LineChannel(self.sock)

    def send_raw(self, text: str) -> None:
        self.sock.sendall((text + "\n").encode("utf-8"))

    def recv(self) -> dict:
        line = self.channel.receive_raw()
        assert line is not None, "connection closed unexpectedly"
        return json.loads(line)

    def close(self) -> None:
        self.channel.close()


class TestFramingErrors:
    def test_malformed_json_gets_error_reply_connection_stays(self):
        doc = simple_scenario_doc()
        thread, port, outcome = _start_server(doc)
        script = _Script(port)
        script.send_raw("{this is not json")
        reply = script.recv()
        assert reply["error"] == "malformed json"
        # The connection survives: a proper hello goes through and the run
        # completes with this very socket acting as the buyer.
        script.send_raw(json.dumps({"control": "hello", "agent_id": "B1"}))
        assert script.recv() == {"control": "ok"}

        client = WireAgentClient(scenario_from_dict(doc), "B1", "127.0.0.1", port)

        def pump():
            while True:
                data = script.recv()
                if "error" in data:
                    continue
                if "control" in data:
                    if data["control"] == "done":
                        script.channel.send({"control": "ok"})
                        return
                    client._handle_control(script.channel, data)
                else:
                    client._handle_message(script.channel, data)

        pump_thread = threading.Thread(target=pump, daemon=True)
        pump_thread.start()
        thread.join(30)
        assert "result" in outcome
        local = run_scenario(scenario_from_dict(doc))
        assert outcome["result"].run.transcript_lines == local.transcript_lines

    def test_unknown_message_kind_gets_protocol_error(self):
        doc = simple_scenario_doc()
        thread, port, outcome = _start_server(doc)
        script = _Script(port)
        script.send_raw(json.dumps({"control": "hello", "agent_id": "B1"}))
        assert script.recv() == {"control": "ok"}
        opened = script.recv()
        assert opened["control"] == "open"
        script.channel.send({"control": "ok"})
        offer = script.recv()
        assert offer["kind"] == "offer"
        # answer with a message of unknown kind: protocol error, channel open
        script.send_raw(json.dumps({"kind": "bogus", "negotiation_id": "x",
                                    "sender": "B1", "round": 0, "payload": None}))
        reply = script.recv()
        assert reply["error"] == "protocol"
        # the server is still waiting for a real reply on the same connection
        script.channel.send({"control": "pass"})
        while True:
            data = script.recv()
            if data.get("control") == "done":
                script.channel.send({"control": "ok"})
                break
            if data.get("control") in ("note", "open"):
                script.channel.send({"control": "ok"})
        thread.join(30)
        assert not thread.is_alive()
        script.close()


class TestHelpers:
    def test_decode_document_rejects_non_object(self):
        with pytest.raises(WireError):
            decode_document("[1, 2, 3]")

    def test_decode_document_rejects_garbage(self):
        with pytest.raises(WireError):
            decode_document("nope{")
