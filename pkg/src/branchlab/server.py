"""Live WebSocket front door for the branch service.

One envelope per text message. Sequence counters are per connection (a
reconnect starts fresh at seq 0 in both directions); session identity spans
connections because pre-connect is idempotent per customer. The service
itself runs entirely on the asyncio event loop, so all mutations stay
serialized.

Flow for an avatar client:
  1. -> ClientHello (all-zero session)             <- ServerHello (assigned id)
  2. -> ProximityUpdate Near/Immediate             (session opens, PreConnected)
  3. -> AuthRequest                                <- AuthResult (+QueueUpdate)
  4. -> UtteranceIn                                <- AgentReply (+RoleSwitch...)
  5. -> ConsentChange                              <- ConsentState
"""

from __future__ import annotations

import asyncio
import logging
import time

import websockets

from . import protocol
from .config import parse_floor, parse_service_config
from .protocol import (
    AuthRequest,
    ClientHello,
    ConsentChange,
    ErrorMsg,
    MessageEnvelope,
    MessagePayload,
    ProximityUpdate,
    ServerHello,
    SessionClose,
    UtteranceIn,
)
from .ranging import ProximityZone
from .roles import ServiceNeed
from .service import AuthFailed, BranchService, ServiceConfig, ServiceError, WrongState
from .sim import default_floor
from .stations import FrameSource, capture_frame, encode_frame

log = logging.getLogger(__name__)

DEMO_SERVICE_TIME_S = 20.0
TICK_INTERVAL_S = 1.0


class Connection:
    """Per-socket protocol state."""

    def __init__(self, websocket):
        self.websocket = websocket
        self.client_id: str | None = None
        self.locale = "en"
        self.hello_station: int | None = None
        self.session_id: str | None = None  # reserved at hello
        self.distance_m: float | None = None
        self.inbound = protocol.SequenceTracker()
        self.out_seq = 0

    async def send(self, payload: MessagePayload, session_id: str) -> None:
        envelope = MessageEnvelope(
            version=protocol.PROTOCOL_VERSION,
            session_id=session_id,
            seq=self.out_seq,
            sent_at=int(time.time() * 1000),
            payload=payload,
        )
        self.out_seq += 1
        await self.websocket.send(protocol.encode(envelope).decode("utf-8"))


class BranchServer:
    def __init__(self, service: BranchService, floor=None, now=None):
        self.service = service
        self.floor = floor or default_floor()
        for station in self.floor.stations:
            if station.station_id not in self.service.stations:
                self.service.register_station(station, self._now())
        self.frame_sources = {
            s.station_id: FrameSource(station=s) for s in self.floor.stations
        }
        self.connections: dict[str, Connection] = {}  # by customer id
        self._service_deadlines: dict[int, tuple[str, float]] = {}
        self._last_report = 0.0

    def _now(self) -> float:
        return time.time()

    # -- outbox routing --------------------------------------------------------

    async def flush_outbox(self) -> None:
        for item in self.service.drain_outbox():
            conn = self.connections.get(item.customer_id)
            if conn is None:
                continue
            session = self.service.live_session_for(item.customer_id)
            session_id = session.session_id if session else conn.session_id
            if session_id is None:
                continue
            try:
                await conn.send(item.payload, session_id)
            except websockets.ConnectionClosed:
                pass

    # -- inbound ---------------------------------------------------------------

    async def handle_socket(self, websocket) -> None:
        conn = Connection(websocket)
        try:
            async for raw in websocket:
                await self.handle_raw(conn, raw)
        except websockets.ConnectionClosed:
            pass
        finally:
            if conn.client_id is not None and self.connections.get(conn.client_id) is conn:
                del self.connections[conn.client_id]

    async def handle_raw(self, conn: Connection, raw) -> None:
        data = raw.encode("utf-8") if isinstance(raw, str) else raw
        try:
            envelope = protocol.decode(data)
        except protocol.ProtocolError as exc:
            log.warning("dropping malformed message: %s", exc)
            await self._send_error(conn, "malformed", str(exc))
            return
        check = conn.inbound.check(envelope)
        if isinstance(check, protocol.Duplicate):
            return
        if isinstance(check, protocol.Gap):
            await self._send_error(
                conn, "gap", f"missing seq {check.missing_from}..{check.missing_to}"
            )
            return
        try:
            await self.dispatch(conn, envelope.payload)
        except ServiceError as exc:
            await self._send_error(conn, type(exc).__name__, str(exc))
        await self.flush_outbox()

    async def _send_error(self, conn: Connection, code: str, detail: str) -> None:
        session_id = conn.session_id or "f" * 32
        try:
            await conn.send(ErrorMsg(code=code, detail=detail), session_id)
        except websockets.ConnectionClosed:
            pass

    async def dispatch(self, conn: Connection, payload: MessagePayload) -> None:
        now = self._now()
        if isinstance(payload, ClientHello):
            conn.client_id = payload.client_id
            conn.locale = payload.locale
            self.connections[payload.client_id] = conn
            existing = self.service.live_session_for(payload.client_id)
            conn.session_id = existing.session_id if existing else self.service.new_session_id()
            profile = self.service.get_profile(payload.client_id)
            profile.locale = payload.locale
            await conn.send(ServerHello(session_id=conn.session_id), conn.session_id)
            return
        if conn.client_id is None or conn.session_id is None:
            raise WrongState("ClientHello required first")
        if isinstance(payload, ProximityUpdate):
            conn.distance_m = payload.distance_m
            if payload.station_id not in self.service.stations:
                raise WrongState(f"unknown station {payload.station_id}")
            if payload.zone in (ProximityZone.NEAR, ProximityZone.IMMEDIATE):
                if self.service.live_session_for(conn.client_id) is None:
                    self.service.open_preconnect(
                        conn.client_id, payload.station_id, now, session_id=conn.session_id
                    )
                conn.hello_station = payload.station_id
            return
        session = self.service.live_session_for(conn.client_id)
        if session is None:
            raise WrongState("no open session; send a Near ProximityUpdate first")
        if isinstance(payload, AuthRequest):
            try:
                self.service.authenticate(session.session_id, payload.credential, now)
            except AuthFailed:
                return  # AuthResult(ok=False) already queued for the client
            if self.service._queue_entry_for(conn.client_id) is None:
                station = conn.hello_station or session.bound_station
                self.service.assign_station(
                    conn.client_id,
                    ServiceNeed.GENERAL_INQUIRY,
                    self._client_position(conn),
                    now,
                )
            self._advance_queues()
            return
        if isinstance(payload, UtteranceIn):
            self.service.handle_utterance(
                session.session_id, payload.text, payload.locale, now
            )
            return
        if isinstance(payload, ConsentChange):
            self.service.set_consent(session.session_id, payload.category, payload.enabled, now)
            return
        if isinstance(payload, SessionClose):
            self.service.close_session(session.session_id, payload.reason, now)
            return
        raise WrongState(f"unexpected payload {payload.tag}")

    def _client_position(self, conn: Connection) -> tuple[float, float]:
        """Synthetic floor position: on the entry-station line at the ranged distance."""
        station_id = conn.hello_station
        if station_id is None or conn.distance_m is None:
            return self.floor.entry_point
        station = next(
            s for s in self.floor.stations if s.station_id == station_id
        )
        ex, ey = self.floor.entry_point
        sx, sy = station.position
        import math

        norm = math.hypot(ex - sx, ey - sy) or 1.0
        d = min(conn.distance_m, norm)
        return (sx + (ex - sx) / norm * d, sy + (ey - sy) / norm * d)

    # -- periodic work -----------------------------------------------------------

    def _advance_queues(self) -> None:
        now = self._now()
        for station_id in self.service.stations:
            record = self.service.stations[station_id]
            if record.in_service_customer is not None:
                continue
            if not self.service.queue_head_ready(station_id):
                continue
            cid = self.service.next_in_queue(station_id, now)
            self._service_deadlines[station_id] = (cid, now + DEMO_SERVICE_TIME_S)
            self._push_frame(station_id, now)
            session = self.service.live_session_for(cid)
            if session is not None:
                self.service.greet(session.session_id, now)

    def _push_frame(self, station_id: int, now: float) -> None:
        positions = [
            self._client_position(conn)
            for conn in self.connections.values()
            if conn.hello_station == station_id and conn.distance_m is not None
        ]
        frame = capture_frame(self.frame_sources[station_id], positions, now)
        self.service.receive_frame(
            protocol.FramePush(
                station_id=station_id, frame=encode_frame(frame), captured_at=int(now * 1000)
            ),
            now,
        )

    async def tick(self) -> None:
        now = self._now()
        for station_id in list(self.service.stations):
            self.service.heartbeat(station_id, now)
        for station_id, (cid, deadline) in list(self._service_deadlines.items()):
            if now >= deadline:
                del self._service_deadlines[station_id]
                session = self.service.live_session_for(cid)
                if session is not None:
                    self.service.close_session(session.session_id, "served", now)
        self._advance_queues()
        if now - self._last_report >= self.service.config.report_interval_s:
            self._last_report = now
            snapshot = {
                cid: self._client_position(conn)
                for cid, conn in self.connections.items()
                if conn.distance_m is not None
            }
            from .stations import observe

            for station in self.floor.stations:
                self.service.receive_observation(observe(station, snapshot), now)
        await self.flush_outbox()


async def serve_forever(doc: dict, host: str = "127.0.0.1", port: int = 8765) -> None:
    """Run the WebSocket service until cancelled."""
    service_config = parse_service_config(doc) if doc else ServiceConfig()
    floor = parse_floor(doc.get("floor", {})) if doc.get("floor") else default_floor()
    if not service_config.credentials:
        service_config.credentials["c-demo"] = b"pin-1234"
    server = BranchServer(BranchService(config=service_config), floor=floor)

    async def ticker() -> None:
        while True:
            await asyncio.sleep(TICK_INTERVAL_S)
            await server.tick()

    async with websockets.serve(server.handle_socket, host, port):
        log.info("branch service listening on ws://%s:%d", host, port)
        print(f"branch service listening on ws://{host}:{port}")
        await ticker()
