"""Live WebSocket flow: hello, proximity pre-connect, auth, dialog, consent."""

import asyncio
import json

import pytest
import websockets

from branchlab import protocol
from branchlab.protocol import (
    AgentReply,
    AuthRequest,
    AuthResult,
    ClientHello,
    ConsentChange,
    ConsentState,
    ErrorMsg,
    MessageEnvelope,
    ProximityUpdate,
    QueueUpdate,
    ServerHello,
    UtteranceIn,
)
from branchlab.ranging import ProximityZone
from branchlab.records import DataCategory
from branchlab.server import BranchServer
from branchlab.service import BranchService, ServiceConfig


class Client:
    def __init__(self, ws):
        self.ws = ws
        self.seq = 0
        self.session_id = protocol.NULL_SESSION_ID

    async def send(self, payload):
        env = MessageEnvelope(
            version=1, session_id=self.session_id, seq=self.seq, sent_at=0, payload=payload
        )
        self.seq += 1
        await self.ws.send(protocol.encode(env).decode())

    async def recv(self, timeout=3.0):
        raw = await asyncio.wait_for(self.ws.recv(), timeout)
        return protocol.decode(raw.encode() if isinstance(raw, str) else raw)

    async def recv_payload_of(self, cls, timeout=3.0):
        while True:
            env = await self.recv(timeout)
            if isinstance(env.payload, cls):
                return env


def run_scenario(coro_factory):
    async def main():
        service = BranchService(config=ServiceConfig(credentials={"c-demo": b"pin-1234"}))
        server = BranchServer(service)
        async with websockets.serve(server.handle_socket, "127.0.0.1", 0) as ws_server:
            port = ws_server.sockets[0].getsockname()[1]
            async with websockets.connect(f"ws://127.0.0.1:{port}") as ws:
                await coro_factory(Client(ws), server)

    asyncio.run(main())


def test_hello_assigns_session_id():
    async def scenario(client, server):
        await client.send(ClientHello(client_kind="avatar", client_id="c-demo", locale="en"))
        env = await client.recv_payload_of(ServerHello)
        assert env.payload.session_id == env.session_id
        assert env.session_id != protocol.NULL_SESSION_ID

    run_scenario(scenario)


def test_full_session_flow():
    async def scenario(client, server):
        await client.send(ClientHello(client_kind="avatar", client_id="c-demo", locale="en"))
        hello = await client.recv_payload_of(ServerHello)
        client.session_id = hello.payload.session_id

        # walking into the Near zone opens the pre-connect session
        await client.send(
            ProximityUpdate(station_id=1, zone=ProximityZone.NEAR, distance_m=3.0)
        )
        await asyncio.sleep(0.05)
        session = server.service.live_session_for("c-demo")
        assert session is not None and session.session_id == client.session_id

        await client.send(AuthRequest(customer_id="c-demo", credential=b"pin-1234"))
        auth = await client.recv_payload_of(AuthResult)
        assert auth.payload.ok and "faq.read" in auth.payload.entitlements
        queue_env = await client.recv_payload_of(QueueUpdate)
        assert queue_env.payload.position == 1

        await client.send(UtteranceIn(text="hello there", locale="en"))
        reply = await client.recv_payload_of(AgentReply)
        assert reply.payload.text

        await client.send(ConsentChange(category=DataCategory.VISUAL, enabled=False))
        consent = await client.recv_payload_of(ConsentState)
        assert consent.payload.consents["Visual"] is False

    run_scenario(scenario)


def test_wrong_credential_auth_result_not_ok():
    async def scenario(client, server):
        await client.send(ClientHello(client_kind="avatar", client_id="c-demo", locale="en"))
        hello = await client.recv_payload_of(ServerHello)
        client.session_id = hello.payload.session_id
        await client.send(
            ProximityUpdate(station_id=1, zone=ProximityZone.IMMEDIATE, distance_m=0.4)
        )
        await client.send(AuthRequest(customer_id="c-demo", credential=b"wrong"))
        auth = await client.recv_payload_of(AuthResult)
        assert auth.payload.ok is False

    run_scenario(scenario)


def test_malformed_message_gets_error_and_connection_survives():
    async def scenario(client, server):
        await client.ws.send("this is not an envelope")
        env = await client.recv_payload_of(ErrorMsg)
        assert env.payload.code == "malformed"
        # connection still works afterwards
        await client.send(ClientHello(client_kind="avatar", client_id="c-demo", locale="en"))
        await client.recv_payload_of(ServerHello)

    run_scenario(scenario)


def test_out_of_order_seq_reports_gap():
    async def scenario(client, server):
        client.seq = 5  # skip 0..4
        await client.send(ClientHello(client_kind="avatar", client_id="c-demo", locale="en"))
        env = await client.recv_payload_of(ErrorMsg)
        assert env.payload.code == "gap"

    run_scenario(scenario)
