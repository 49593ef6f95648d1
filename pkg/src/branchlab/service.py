"""Centralized branch service.

Owns every session's lifecycle from beacon-triggered pre-connect to close,
the per-station queues, role switching with least-privilege entitlement
replacement, location-based session rebinding, crowd aggregation, and the
dialog pipeline (translate in, stateless inference, validate, translate out).

All state mutations are meant to run on a single logical event loop; the
sim harness and the WebSocket front end both drive this one object and
drain `outbox` for customer-bound messages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .inference import (
    BackendUnavailable,
    IdentityTranslator,
    InferenceError,
    InferenceRequest,
    MockBackend,
    PromptTemplate,
    SessionSnapshot,
    Translator,
    TranslatorUnavailable,
    ValidationPolicy,
    Valid,
    build_prompt,
    infer,
    sentiment,
    translate,
    validate,
)
from .protocol import (
    AgentReply,
    AuthResult,
    ConsentState,
    EncodedFrame,
    FramePush,
    HandoffDirective,
    MessagePayload,
    ObservationReport,
    QueueUpdate,
    RoleSwitch,
    SessionClose,
)
from .records import (
    AuditChain,
    AuditKind,
    ConsentDenied,
    CustomerProfile,
    DataCategory,
    PayloadStore,
)
from .roles import AgentRole, Entitlement, RoleScopeMatrix, ServiceNeed, UnknownRole
from .stations import AgentStation

SYSTEM_SESSION_ID = "0" * 32  # audit scope for entries not tied to a session


class ServiceError(Exception):
    pass


class UnknownStation(ServiceError):
    pass


class WrongState(ServiceError):
    pass


class AuthFailed(ServiceError):
    pass


class NoStationsAvailable(ServiceError):
    pass


class RegistrationRejected(ServiceError):
    pass


class IllegalTransition(ServiceError):
    """Internal guard; raised if an operation would break the state machine."""


class SessionState(Enum):
    PRE_CONNECTED = "PreConnected"
    AUTHENTICATED = "Authenticated"
    QUEUED = "Queued"
    IN_SERVICE = "InService"
    TRANSFERRING = "Transferring"
    CLOSED = "Closed"


LEGAL_TRANSITIONS: dict[SessionState, frozenset[SessionState]] = {
    SessionState.PRE_CONNECTED: frozenset({SessionState.AUTHENTICATED, SessionState.CLOSED}),
    SessionState.AUTHENTICATED: frozenset({SessionState.QUEUED, SessionState.CLOSED}),
    SessionState.QUEUED: frozenset({SessionState.IN_SERVICE, SessionState.CLOSED}),
    SessionState.IN_SERVICE: frozenset({SessionState.TRANSFERRING, SessionState.CLOSED}),
    SessionState.TRANSFERRING: frozenset(
        {SessionState.QUEUED, SessionState.IN_SERVICE, SessionState.CLOSED}
    ),
    SessionState.CLOSED: frozenset(),
}


@dataclass
class Session:
    session_id: str
    customer_id: str
    state: SessionState
    created_at: float
    state_entered_at: float
    bound_station: int | None = None
    active_role: AgentRole | None = None
    entitlements: frozenset[Entitlement] = frozenset()
    locale: str = "en"
    transcript: list[tuple[str, str]] = field(default_factory=list)


@dataclass
class QueueEntry:
    customer_id: str
    need: ServiceNeed
    enqueued_at: float
    assigned_station: int
    handoff: bool = False  # station role cannot serve the need; switch on serve
    last_notified_position: int | None = None


@dataclass
class StationRecord:
    station: AgentStation
    registered_at: float
    last_heartbeat: float
    latest_frame: EncodedFrame | None = None
    latest_observation: ObservationReport | None = None
    observation_at: float | None = None
    in_service_customer: str | None = None


@dataclass(frozen=True)
class CrowdReport:
    """Latest per-station customer counts; None marks a stale/unknown station."""

    counts: dict[int, int | None]
    staleness_s: float


@dataclass(frozen=True)
class Allow:
    pass


@dataclass(frozen=True)
class Deny:
    reason: str


AuthorizeResult = Allow | Deny


@dataclass(frozen=True)
class Outgoing:
    """A customer-bound payload waiting for the transport layer."""

    customer_id: str
    payload: MessagePayload


@dataclass
class ServiceConfig:
    matrix: RoleScopeMatrix = field(default_factory=RoleScopeMatrix)
    credentials: dict[str, bytes] = field(default_factory=dict)
    fallback_reply: str = (
        "I want to get that exactly right, so let me bring in a teammate to confirm."
    )
    restricted_reply: str = "I'm not able to access that with my current role permissions."
    service_time_estimate_s: float = 120.0
    report_interval_s: float = 5.0
    heartbeat_interval_s: float = 2.0
    missed_heartbeats_allowed: int = 3
    max_response_chars: int = 2000
    prompt_template: PromptTemplate = field(default_factory=PromptTemplate)


# Keywords in customer text that imply touching a protected resource.
RESOURCE_HINTS: tuple[tuple[str, str], ...] = (
    ("balance", "accounts.balance"),
    ("history", "accounts.history"),
    ("statement", "accounts.history"),
    ("catalog", "catalog.read"),
    ("offer", "offers.create"),
)


def walking_distance(a: tuple[float, float], b: tuple[float, float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def select_station(
    need: ServiceNeed,
    stations: dict[int, AgentStation],
    queue_lengths: dict[int, int],
    customer_pos: tuple[float, float],
    matrix: RoleScopeMatrix,
) -> tuple[int, bool]:
    """Choose a station for a need by (queue length, walking distance, id).

    Prefers stations whose role can serve the need; falls back to all
    stations with a handoff flag when none can. Pure, so the lexicographic
    rule is brute-force testable.
    """
    if not stations:
        raise NoStationsAvailable("no registered available stations")
    capable = [sid for sid, st in stations.items() if matrix.can_serve(st.role, need)]
    fallback = not capable
    pool = capable or list(stations)
    best = min(
        pool,
        key=lambda sid: (
            queue_lengths.get(sid, 0),
            walking_distance(stations[sid].position, customer_pos),
            sid,
        ),
    )
    return best, fallback


class BranchService:
    """Single-event-loop branch orchestrator. Not thread-safe by design."""

    def __init__(
        self,
        config: ServiceConfig | None = None,
        backend=None,
        translator: Translator | None = None,
    ):
        self.config = config or ServiceConfig()
        self.backend = backend if backend is not None else MockBackend()
        self.translator = translator or IdentityTranslator()
        self.chain = AuditChain()
        self.payload_store = PayloadStore()
        self.stations: dict[int, StationRecord] = {}
        self.queues: dict[int, list[QueueEntry]] = {}
        self.sessions: dict[str, Session] = {}
        self.profiles: dict[str, CustomerProfile] = {}
        self.outbox: list[Outgoing] = []
        self.transition_log: list[tuple[str, SessionState, SessionState]] = []
        self._live_session_by_customer: dict[str, str] = {}
        self._session_counter = 0
        self._request_counter = 0

    # -- plumbing -------------------------------------------------------------

    def new_session_id(self) -> str:
        self._session_counter += 1
        return f"{self._session_counter:032x}"

    def _emit(self, customer_id: str, payload: MessagePayload) -> None:
        self.outbox.append(Outgoing(customer_id=customer_id, payload=payload))

    def drain_outbox(self) -> list[Outgoing]:
        out, self.outbox = self.outbox, []
        return out

    def _audit(self, kind: AuditKind, payload: dict, session_id: str, now: float) -> None:
        self.chain.append(kind, payload, session_id, now)

    def _transition(self, session: Session, new_state: SessionState, now: float) -> None:
        if new_state not in LEGAL_TRANSITIONS[session.state]:
            raise IllegalTransition(f"{session.state.value} -> {new_state.value}")
        self.transition_log.append((session.session_id, session.state, new_state))
        session.state = new_state
        session.state_entered_at = now

    def get_profile(self, customer_id: str) -> CustomerProfile:
        profile = self.profiles.get(customer_id)
        if profile is None:
            profile = CustomerProfile(customer_id=customer_id, display_name=customer_id)
            self.profiles[customer_id] = profile
        return profile

    def get_session(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise WrongState(f"no such session {session_id}")
        return session

    def live_session_for(self, customer_id: str) -> Session | None:
        sid = self._live_session_by_customer.get(customer_id)
        return self.sessions.get(sid) if sid else None

    # -- station registry -----------------------------------------------------

    def register_station(self, station: AgentStation, now: float) -> int:
        """Add a station to the registry; the id doubles as the handle."""
        if station.station_id in self.stations:
            raise RegistrationRejected(f"station {station.station_id} already registered")
        for record in self.stations.values():
            if record.station.beacon == station.beacon:
                raise RegistrationRejected("beacon identity already in use")
        self.stations[station.station_id] = StationRecord(
            station=station, registered_at=now, last_heartbeat=now
        )
        self.queues[station.station_id] = []
        return station.station_id

    def heartbeat(self, station_id: int, now: float) -> None:
        record = self.stations.get(station_id)
        if record is None:
            raise UnknownStation(f"station {station_id} not registered")
        record.last_heartbeat = now

    def station_available(self, station_id: int, now: float) -> bool:
        record = self.stations.get(station_id)
        if record is None:
            return False
        limit = self.config.missed_heartbeats_allowed * self.config.heartbeat_interval_s
        return now - record.last_heartbeat <= limit

    def available_stations(self, now: float) -> dict[int, AgentStation]:
        return {
            sid: rec.station
            for sid, rec in self.stations.items()
            if self.station_available(sid, now)
        }

    # -- session lifecycle ------------------------------------------------------

    def open_preconnect(
        self, customer_id: str, station_id: int, at: float, session_id: str | None = None
    ) -> Session:
        """Create the pre-connect session; idempotent per live customer."""
        existing = self.live_session_for(customer_id)
        if existing is not None:
            return existing
        if station_id not in self.stations:
            raise UnknownStation(f"station {station_id} not registered")
        sid = session_id or self.new_session_id()
        session = Session(
            session_id=sid,
            customer_id=customer_id,
            state=SessionState.PRE_CONNECTED,
            created_at=at,
            state_entered_at=at,
            bound_station=station_id,
            locale=self.get_profile(customer_id).locale,
        )
        self.sessions[sid] = session
        self._live_session_by_customer[customer_id] = sid
        return session

    def authenticate(self, session_id: str, credential: bytes, now: float) -> frozenset[Entitlement]:
        """Opaque credential check; grants the default role's matrix row."""
        session = self.get_session(session_id)
        if session.state is not SessionState.PRE_CONNECTED:
            raise WrongState(f"authenticate in {session.state.value}")
        expected = self.config.credentials.get(session.customer_id)
        ok = expected is not None and expected == credential
        self._audit(
            AuditKind.AUTH_ATTEMPT,
            {"customer_id": session.customer_id, "ok": ok},
            session_id,
            now,
        )
        if not ok:
            self._emit(
                session.customer_id,
                AuthResult(ok=False, entitlements=(), reason="invalid credential"),
            )
            raise AuthFailed(f"credential rejected for {session.customer_id}")
        self._transition(session, SessionState.AUTHENTICATED, now)
        session.active_role = AgentRole.CUSTOMER_SERVICE
        session.entitlements = self.config.matrix.scope(AgentRole.CUSTOMER_SERVICE)
        resources = tuple(sorted(e.resource for e in session.entitlements))
        self._emit(session.customer_id, AuthResult(ok=True, entitlements=resources))
        # A customer enqueued while approaching becomes Queued on auth.
        entry = self._queue_entry_for(session.customer_id)
        if entry is not None:
            session.bound_station = entry.assigned_station
            self._transition(session, SessionState.QUEUED, now)
        return session.entitlements

    def _queue_entry_for(self, customer_id: str) -> QueueEntry | None:
        for queue in self.queues.values():
            for entry in queue:
                if entry.customer_id == customer_id:
                    return entry
        return None

    def assign_station(
        self,
        customer_id: str,
        need: ServiceNeed,
        customer_pos: tuple[float, float],
        now: float,
    ) -> int:
        """Queue a customer at the best station for their need.

        The queue is customer-level: a walking customer is enqueued before
        any session exists. If the customer already has an authenticated
        session it moves to Queued here; otherwise authenticate() links the
        states later.
        """
        if any(e.customer_id == customer_id for q in self.queues.values() for e in q):
            raise WrongState(f"{customer_id} is already queued")
        session = self.live_session_for(customer_id)
        if session is not None and session.state not in (
            SessionState.PRE_CONNECTED,
            SessionState.AUTHENTICATED,
        ):
            raise WrongState(f"assign_station in {session.state.value}")
        stations = self.available_stations(now)
        if not stations:
            raise NoStationsAvailable("no registered available stations")
        queue_lengths = {sid: len(self.queues[sid]) for sid in stations}
        station_id, handoff = select_station(
            need, stations, queue_lengths, customer_pos, self.config.matrix
        )
        self._enqueue(
            QueueEntry(
                customer_id=customer_id,
                need=need,
                enqueued_at=now,
                assigned_station=station_id,
                handoff=handoff,
            )
        )
        if session is not None:
            session.bound_station = station_id
            if session.state is SessionState.AUTHENTICATED:
                self._transition(session, SessionState.QUEUED, now)
        self._notify_queue(station_id)
        return station_id

    def _enqueue(self, entry: QueueEntry) -> None:
        queue = self.queues[entry.assigned_station]
        queue.append(entry)
        queue.sort(key=lambda e: (e.enqueued_at, e.customer_id))

    def _notify_queue(self, station_id: int) -> None:
        eta_unit = self.config.service_time_estimate_s
        for idx, entry in enumerate(self.queues[station_id]):
            position = idx + 1
            if entry.last_notified_position != position:
                entry.last_notified_position = position
                self._emit(
                    entry.customer_id,
                    QueueUpdate(position=position, station_id=station_id, eta_s=position * eta_unit),
                )

    def queue_head_ready(self, station_id: int) -> bool:
        """True iff the head customer has a session that can move to InService."""
        queue = self.queues.get(station_id, [])
        if not queue:
            return False
        session = self.live_session_for(queue[0].customer_id)
        return session is not None and session.state is SessionState.QUEUED

    def next_in_queue(self, station_id: int, now: float) -> str | None:
        """Serve the queue head (FIFO by enqueue time, ties to lower id).

        The served session switches to the station's own role, or to the
        role preferred for the entry's need when the station's role cannot
        serve it (the handoff path).
        """
        if station_id not in self.stations:
            raise UnknownStation(f"station {station_id} not registered")
        queue = self.queues[station_id]
        if not queue:
            return None
        session = self.live_session_for(queue[0].customer_id)
        if session is None or session.state is not SessionState.QUEUED:
            raise WrongState("queue head has no serviceable session yet")
        entry = queue.pop(0)
        self._transition(session, SessionState.IN_SERVICE, now)
        session.bound_station = station_id
        self.stations[station_id].in_service_customer = entry.customer_id
        station_role = self.stations[station_id].station.role
        if self.config.matrix.can_serve(station_role, entry.need):
            desired = station_role
            reason = "station role"
        else:
            desired = self.config.matrix.role_for_need(entry.need)
            reason = "station role cannot serve need"
        if desired is not session.active_role:
            self.switch_role(session.session_id, desired, reason, now)
        self._notify_queue(station_id)
        return entry.customer_id

    def switch_role(self, session_id: str, new_role: AgentRole, reason: str, now: float) -> None:
        """Replace (never accumulate) the entitlement row for the new role."""
        session = self.get_session(session_id)
        if session.state is not SessionState.IN_SERVICE:
            raise WrongState(f"switch_role in {session.state.value}")
        if not isinstance(new_role, AgentRole):
            raise UnknownRole(f"unknown role {new_role!r}")
        session.active_role = new_role
        session.entitlements = self.config.matrix.scope(new_role)
        self._audit(
            AuditKind.ROLE_SWITCH,
            {"new_role": new_role.value, "reason": reason},
            session_id,
            now,
        )
        self._emit(session.customer_id, RoleSwitch(new_role=new_role, reason=reason))

    def authorize(self, session_id: str, resource: str, now: float) -> AuthorizeResult:
        """Allow iff the resource is in the session's current entitlement row."""
        session = self.get_session(session_id)
        if any(e.resource == resource for e in session.entitlements):
            return Allow()
        reason = f"{resource} not granted to {session.active_role.value if session.active_role else 'unauthenticated'}"
        self._audit(
            AuditKind.AUTHORIZATION,
            {"resource": resource, "allowed": False, "reason": reason},
            session_id,
            now,
        )
        return Deny(reason=reason)

    def rebind_session(self, session_id: str, new_station_id: int, now: float) -> None:
        """Move a session to a new station's queue, preserving identity and grants."""
        session = self.get_session(session_id)
        if new_station_id not in self.stations:
            raise UnknownStation(f"station {new_station_id} not registered")
        if session.state not in (SessionState.QUEUED, SessionState.IN_SERVICE):
            raise WrongState(f"rebind in {session.state.value}")
        old_entry: QueueEntry | None = None
        for queue in self.queues.values():
            for entry in list(queue):
                if entry.customer_id == session.customer_id:
                    old_entry = entry
                    queue.remove(entry)
        if session.state is SessionState.IN_SERVICE:
            old_station = self.stations.get(session.bound_station or -1)
            if old_station is not None and old_station.in_service_customer == session.customer_id:
                old_station.in_service_customer = None
            self._transition(session, SessionState.TRANSFERRING, now)
            self._transition(session, SessionState.QUEUED, now)
        need = old_entry.need if old_entry else ServiceNeed.GENERAL_INQUIRY
        old_station_id = session.bound_station
        self._enqueue(
            QueueEntry(
                customer_id=session.customer_id,
                need=need,
                enqueued_at=now,
                assigned_station=new_station_id,
                handoff=not self.config.matrix.can_serve(
                    self.stations[new_station_id].station.role, need
                ),
            )
        )
        session.bound_station = new_station_id
        self._audit(
            AuditKind.HANDOFF,
            {"from_station": old_station_id, "to_station": new_station_id},
            session_id,
            now,
        )
        self._emit(
            session.customer_id,
            HandoffDirective(target_station_id=new_station_id, reason="rebind"),
        )
        if old_station_id is not None and old_station_id in self.queues:
            self._notify_queue(old_station_id)
        self._notify_queue(new_station_id)

    def close_session(self, session_id: str, reason: str, now: float) -> None:
        """Close from any state; releases queue slots and the serving station."""
        session = self.get_session(session_id)
        if session.state is SessionState.CLOSED:
            return
        for station_id, queue in self.queues.items():
            before = len(queue)
            queue[:] = [e for e in queue if e.customer_id != session.customer_id]
            if len(queue) != before:
                self._notify_queue(station_id)
        for record in self.stations.values():
            if record.in_service_customer == session.customer_id:
                record.in_service_customer = None
        self._transition(session, SessionState.CLOSED, now)
        self._live_session_by_customer.pop(session.customer_id, None)
        self._emit(session.customer_id, SessionClose(reason=reason))

    # -- situational awareness ---------------------------------------------------

    def receive_observation(self, report: ObservationReport, now: float) -> None:
        record = self.stations.get(report.station_id)
        if record is None:
            raise UnknownStation(f"station {report.station_id} not registered")
        record.latest_observation = report
        record.observation_at = now

    def receive_frame(self, push: FramePush, now: float) -> None:
        """Store a station's latest frame; PNG bytes go to the side store only
        when the customer in service consents to Visual data."""
        record = self.stations.get(push.station_id)
        if record is None:
            raise UnknownStation(f"station {push.station_id} not registered")
        record.latest_frame = push.frame
        serving = record.in_service_customer
        session = self.live_session_for(serving) if serving else None
        session_id = session.session_id if session else SYSTEM_SESSION_ID
        self._audit(
            AuditKind.FRAME_REF,
            {"station_id": push.station_id, "digest": push.frame.digest},
            session_id,
            now,
        )
        if serving is None or self.get_profile(serving).consent.get(DataCategory.VISUAL, False):
            self.payload_store.put(push.frame.png_bytes)

    def crowd_levels(self, now: float) -> CrowdReport:
        """Per-station counts from the latest observation reports.

        A station with no report within twice the report interval is unknown.
        """
        counts: dict[int, int | None] = {}
        oldest_age = 0.0
        horizon = 2 * self.config.report_interval_s
        for sid, record in self.stations.items():
            if record.observation_at is None or now - record.observation_at > horizon:
                counts[sid] = None
            else:
                counts[sid] = len(record.latest_observation.customer_ids_in_fov)
                oldest_age = max(oldest_age, now - record.observation_at)
        return CrowdReport(counts=counts, staleness_s=oldest_age)

    # -- consent ------------------------------------------------------------------

    def set_consent(self, session_id: str, category: DataCategory, enabled: bool, now: float) -> None:
        """Toggle a data category; disabling also erases stored facts for it."""
        session = self.get_session(session_id)
        profile = self.get_profile(session.customer_id)
        if enabled:
            profile.consent[category] = True
        else:
            profile.forget(category)
        self._audit(
            AuditKind.AUTHORIZATION,
            {"action": "consent_change", "category": category.value, "enabled": enabled},
            session_id,
            now,
        )
        self._emit(
            session.customer_id,
            ConsentState(consents={c.value: v for c, v in sorted(profile.consent.items(), key=lambda kv: kv[0].value)}),
        )

    def _remember(
        self,
        session: Session,
        category: DataCategory,
        key: str,
        value: str,
        now: float,
    ) -> None:
        """Store a fact, auditing the denial when consent blocks it."""
        try:
            self.get_profile(session.customer_id).remember(category, key, value, now)
        except ConsentDenied:
            self._audit(
                AuditKind.AUTHORIZATION,
                {"action": "remember", "category": category.value, "allowed": False},
                session.session_id,
                now,
            )

    # -- dialog pipeline ------------------------------------------------------------

    def _store_if_conversational_consent(self, session: Session, payload: dict) -> None:
        if self.get_profile(session.customer_id).consent.get(DataCategory.CONVERSATIONAL, False):
            self.payload_store.put(payload)

    def _translate_or_identity(
        self, session: Session, text: str, from_locale: str, to_locale: str, now: float
    ) -> str:
        try:
            return translate(text, from_locale, to_locale, self.translator)
        except TranslatorUnavailable:
            self._audit(
                AuditKind.VALIDATION_FAILURE,
                {"reason": "translator_unavailable", "from": from_locale, "to": to_locale},
                session.session_id,
                now,
            )
            return text

    def _snapshot(self, session: Session) -> SessionSnapshot:
        profile = self.get_profile(session.customer_id)
        return SessionSnapshot(
            customer_name=profile.display_name,
            facts=tuple((f.key, f.value) for f in profile.facts),
            transcript=tuple(session.transcript),
        )

    def handle_utterance(self, session_id: str, text: str, locale: str, now: float) -> AgentReply:
        """Full dialog turn: audit, memorize, translate, infer, validate, reply."""
        session = self.get_session(session_id)
        if session.state not in (
            SessionState.AUTHENTICATED,
            SessionState.QUEUED,
            SessionState.IN_SERVICE,
        ):
            raise WrongState(f"utterance in {session.state.value}")
        profile = self.get_profile(session.customer_id)
        self._audit(AuditKind.UTTERANCE, {"text": text, "locale": locale}, session_id, now)
        self._store_if_conversational_consent(session, {"speaker": "customer", "text": text})
        tone = sentiment(text)
        self._remember(session, DataCategory.SENTIMENT, "tone", str(tone), now)
        self._remember(session, DataCategory.CONVERSATIONAL, "utterance", text, now)

        text_en = self._translate_or_identity(session, text, locale, "en", now)
        role = session.active_role or AgentRole.CUSTOMER_SERVICE
        prompt = build_prompt(self._snapshot(session), text_en, role, self.config.prompt_template)
        session.transcript.append(("customer", text_en))

        image = None
        if session.state is SessionState.IN_SERVICE and session.bound_station is not None:
            record = self.stations.get(session.bound_station)
            if (
                record is not None
                and record.latest_frame is not None
                and profile.consent.get(DataCategory.VISUAL, False)
            ):
                image = record.latest_frame
                self._audit(
                    AuditKind.FRAME_REF,
                    {
                        "station_id": session.bound_station,
                        "digest": image.digest,
                        "use": "inference_context",
                    },
                    session_id,
                    now,
                )

        self._request_counter += 1
        request = InferenceRequest(
            prompt_text=prompt, request_id=f"req-{self._request_counter}", image=image
        )
        try:
            response = infer(
                request, self.backend, max_response_chars=self.config.max_response_chars
            )
        except InferenceError as exc:
            self._audit(
                AuditKind.VALIDATION_FAILURE,
                {"reason": f"backend: {type(exc).__name__}"},
                session_id,
                now,
            )
            return self._reply(session, self.config.fallback_reply, None, locale, now)

        # Escalate the role when the classified need is outside the active
        # role's capabilities (only legal while in service).
        if (
            response.intent is not None
            and session.state is SessionState.IN_SERVICE
            and not self.config.matrix.can_serve(role, response.intent)
        ):
            target = self.config.matrix.role_for_need(response.intent)
            if target is not session.active_role:
                self.switch_role(session_id, target, "intent escalation", now)

        # Deny-by-default resource gate on what the customer is asking about.
        lowered = text_en.lower()
        for keyword, resource in RESOURCE_HINTS:
            if keyword in lowered:
                if isinstance(self.authorize(session_id, resource, now), Deny):
                    return self._reply(
                        session, self.config.restricted_reply, response.intent, locale, now
                    )
                break

        active_role = session.active_role or role
        policy = ValidationPolicy(
            allowed_intents=self.config.matrix.capabilities[active_role],
            max_len=self.config.max_response_chars,
        )
        verdict = validate(response, policy, profile.fact_values())
        if not isinstance(verdict, Valid):
            self._audit(
                AuditKind.VALIDATION_FAILURE, {"reason": verdict.reason}, session_id, now
            )
            return self._reply(session, self.config.fallback_reply, response.intent, locale, now)
        return self._reply(session, response.text, response.intent, locale, now)

    def _reply(
        self,
        session: Session,
        text_en: str,
        intent: ServiceNeed | None,
        locale: str,
        now: float,
    ) -> AgentReply:
        text_out = self._translate_or_identity(session, text_en, "en", locale, now)
        role = session.active_role or AgentRole.CUSTOMER_SERVICE
        self._audit(
            AuditKind.REPLY,
            {"text": text_out, "role": role.value},
            session.session_id,
            now,
        )
        self._store_if_conversational_consent(session, {"speaker": "agent", "text": text_out})
        session.transcript.append(("agent", text_out))
        payload = AgentReply(text=text_out, intent=intent, role=role)
        self._emit(session.customer_id, payload)
        return payload

    def greet(self, session_id: str, now: float) -> AgentReply:
        """Agent-initiated greeting once a session is ready for dialog."""
        session = self.get_session(session_id)
        if session.state not in (
            SessionState.AUTHENTICATED,
            SessionState.QUEUED,
            SessionState.IN_SERVICE,
        ):
            raise WrongState(f"greet in {session.state.value}")
        role = session.active_role or AgentRole.CUSTOMER_SERVICE
        prompt = build_prompt(
            self._snapshot(session), "[customer approaching the station]", role,
            self.config.prompt_template,
        )
        self._request_counter += 1
        request = InferenceRequest(prompt_text=prompt, request_id=f"req-{self._request_counter}")
        try:
            response = infer(
                request, self.backend, max_response_chars=self.config.max_response_chars
            )
            text = response.text
            intent = response.intent
        except InferenceError:
            text, intent = self.config.fallback_reply, None
        return self._reply(session, text, intent, session.locale, now)

    # -- invariant helpers (used by tests and the sim's safety checks) -----------

    def queued_customer_ids(self) -> list[str]:
        return [entry.customer_id for queue in self.queues.values() for entry in queue]

    def check_invariants(self) -> None:
        """Raise IllegalTransition when a structural invariant is broken."""
        queued = self.queued_customer_ids()
        if len(queued) != len(set(queued)):
            raise IllegalTransition("customer appears in two queues")
        for sid, queue in self.queues.items():
            for entry in queue:
                session = self.live_session_for(entry.customer_id)
                if session is not None and session.state not in (
                    SessionState.PRE_CONNECTED,
                    SessionState.QUEUED,
                ):
                    raise IllegalTransition("queued customer's session in a non-queue state")
        queued_set = set(queued)
        for session in self.sessions.values():
            if session.state is SessionState.QUEUED and session.customer_id not in queued_set:
                raise IllegalTransition("Queued session without a queue entry")
            if session.state is SessionState.IN_SERVICE and session.customer_id in queued_set:
                raise IllegalTransition("InService session still holds a queue entry")
        for session in self.sessions.values():
            if session.state is SessionState.IN_SERVICE and (
                session.bound_station is None or session.active_role is None
            ):
                raise IllegalTransition("InService session missing station or role")
            if session.active_role is None:
                if session.entitlements:
                    raise IllegalTransition("entitlements before authentication")
            else:
                expected = self.config.matrix.scope(session.active_role)
                if session.entitlements != expected:
                    raise IllegalTransition("entitlements drifted from matrix row")
