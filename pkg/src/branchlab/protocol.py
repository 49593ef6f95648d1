"""Wire protocol shared by avatar clients, agent stations, and the branch service.

Every message travels as one MessageEnvelope serialized to canonical JSON:
keys sorted, no insignificant whitespace, UTF-8. Canonical form makes the
codec injective and keeps audit hashing of logged transcripts deterministic.
Binary fields (credentials, PNG frames) are base64 inside the JSON text.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import json
import math
import re
from dataclasses import dataclass
from typing import Any, Callable

from .ranging import ProximityZone
from .records import DataCategory
from .roles import AgentRole, ServiceNeed

PROTOCOL_VERSION = 1
NULL_SESSION_ID = "0" * 32

_SESSION_ID_RE = re.compile(r"^[0-9a-f]{32}$")
_SHA256_HEX_RE = re.compile(r"^[0-9a-f]{64}$")


class ProtocolError(Exception):
    """Base for all protocol codec errors."""


class InvalidEnvelope(ProtocolError):
    """Envelope violates an invariant and cannot be encoded."""


class MalformedMessage(ProtocolError):
    """Input bytes do not decode to any valid envelope."""


class UnknownPayloadTag(ProtocolError):
    """Payload tag is not in the closed variant set."""


class VersionMismatch(ProtocolError):
    """Envelope carries an unsupported protocol version."""


# ---------------------------------------------------------------------------
# Field codecs. Each codec validates the in-memory value on encode and the
# wire value on decode, so both directions enforce the same constraints.


class _BadField(Exception):
    pass


@dataclass(frozen=True)
class _Codec:
    check: Callable[[Any], None]
    to_wire: Callable[[Any], Any]
    from_wire: Callable[[Any], Any]


def _identity(v: Any) -> Any:
    return v


def _check_str(v: Any) -> None:
    if not isinstance(v, str):
        raise _BadField("expected string")


def _from_str(v: Any) -> str:
    _check_str(v)
    return v


def _check_bool(v: Any) -> None:
    if not isinstance(v, bool):
        raise _BadField("expected boolean")


def _from_bool(v: Any) -> bool:
    _check_bool(v)
    return v


def _check_uint(v: Any) -> None:
    if isinstance(v, bool) or not isinstance(v, int) or v < 0:
        raise _BadField("expected non-negative integer")


def _from_uint(v: Any) -> int:
    _check_uint(v)
    return v


def _check_pos_int(v: Any) -> None:
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise _BadField("expected integer >= 1")


def _from_pos_int(v: Any) -> int:
    _check_pos_int(v)
    return v


def _check_nonneg_float(v: Any) -> None:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise _BadField("expected number")
    if not math.isfinite(v) or v < 0:
        raise _BadField("expected finite number >= 0")


def _from_nonneg_float(v: Any) -> float:
    _check_nonneg_float(v)
    return float(v)


def _float_to_wire(v: Any) -> Any:
    # Integral floats travel as JSON integers so every implementation of
    # the canonical form agrees on the bytes (600.0 and 600 are one value).
    f = float(v)
    return int(f) if f.is_integer() else f


def _check_bytes(v: Any) -> None:
    if not isinstance(v, bytes):
        raise _BadField("expected bytes")


def _bytes_to_wire(v: bytes) -> str:
    return base64.b64encode(v).decode("ascii")


def _bytes_from_wire(v: Any) -> bytes:
    _check_str(v)
    try:
        return base64.b64decode(v, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise _BadField(f"bad base64: {exc}") from exc


def _opt(codec: _Codec) -> _Codec:
    def check(v: Any) -> None:
        if v is not None:
            codec.check(v)

    def to_wire(v: Any) -> Any:
        return None if v is None else codec.to_wire(v)

    def from_wire(v: Any) -> Any:
        return None if v is None else codec.from_wire(v)

    return _Codec(check, to_wire, from_wire)


def _enum(cls: type) -> _Codec:
    def check(v: Any) -> None:
        if not isinstance(v, cls):
            raise _BadField(f"expected {cls.__name__}")

    def from_wire(v: Any) -> Any:
        _check_str(v)
        try:
            return cls(v)
        except ValueError as exc:
            raise _BadField(f"unknown {cls.__name__}: {v!r}") from exc

    return _Codec(check, lambda v: v.value, from_wire)


def _str_choice(allowed: frozenset[str]) -> _Codec:
    def check(v: Any) -> None:
        _check_str(v)
        if v not in allowed:
            raise _BadField(f"expected one of {sorted(allowed)}, got {v!r}")

    def from_wire(v: Any) -> str:
        check(v)
        return v

    return _Codec(check, _identity, from_wire)


def _str_tuple() -> _Codec:
    def check(v: Any) -> None:
        if not isinstance(v, tuple) or not all(isinstance(x, str) for x in v):
            raise _BadField("expected tuple of strings")

    def from_wire(v: Any) -> tuple[str, ...]:
        if not isinstance(v, list) or not all(isinstance(x, str) for x in v):
            raise _BadField("expected array of strings")
        return tuple(v)

    return _Codec(check, list, from_wire)


# Intent is a ServiceNeed or unknown; "Unknown" on the wire maps to None.
def _intent_codec() -> _Codec:
    def check(v: Any) -> None:
        if v is not None and not isinstance(v, ServiceNeed):
            raise _BadField("expected ServiceNeed or None")

    def to_wire(v: Any) -> str:
        return "Unknown" if v is None else v.value

    def from_wire(v: Any) -> ServiceNeed | None:
        _check_str(v)
        if v == "Unknown":
            return None
        try:
            return ServiceNeed(v)
        except ValueError as exc:
            raise _BadField(f"unknown intent: {v!r}") from exc

    return _Codec(check, to_wire, from_wire)


def _consent_map_codec() -> _Codec:
    names = frozenset(c.value for c in DataCategory)

    def check(v: Any) -> None:
        if not isinstance(v, dict):
            raise _BadField("expected mapping")
        for k, flag in v.items():
            if not isinstance(k, str) or k not in names:
                raise _BadField(f"unknown data category: {k!r}")
            _check_bool(flag)

    def from_wire(v: Any) -> dict[str, bool]:
        check(v)
        return dict(v)

    return _Codec(check, _identity, from_wire)


def _session_id_codec() -> _Codec:
    def check(v: Any) -> None:
        _check_str(v)
        if not _SESSION_ID_RE.match(v):
            raise _BadField("expected 32 lowercase hex chars")

    def from_wire(v: Any) -> str:
        check(v)
        return v

    return _Codec(check, _identity, from_wire)


_STR = _Codec(_check_str, _identity, _from_str)
_BOOL = _Codec(_check_bool, _identity, _from_bool)
_UINT = _Codec(_check_uint, _identity, _from_uint)
_POS_INT = _Codec(_check_pos_int, _identity, _from_pos_int)
_NONNEG_FLOAT = _Codec(_check_nonneg_float, _float_to_wire, _from_nonneg_float)
_BYTES = _Codec(_check_bytes, _bytes_to_wire, _bytes_from_wire)


# ---------------------------------------------------------------------------
# Frames travel inside FramePush, so the encoded-frame type lives here and is
# re-exported by the stations module that produces it.


@dataclass(frozen=True)
class EncodedFrame:
    """Losslessly encoded PNG image plus the content hash of its bytes."""

    png_bytes: bytes
    digest: str

    def __post_init__(self) -> None:
        if not isinstance(self.png_bytes, bytes):
            raise ValueError("png_bytes must be bytes")
        expected = hashlib.sha256(self.png_bytes).hexdigest()
        if self.digest != expected:
            raise ValueError("digest does not match png_bytes")

    @classmethod
    def from_png(cls, png_bytes: bytes) -> "EncodedFrame":
        return cls(png_bytes=png_bytes, digest=hashlib.sha256(png_bytes).hexdigest())


def _frame_codec() -> _Codec:
    def check(v: Any) -> None:
        if not isinstance(v, EncodedFrame):
            raise _BadField("expected EncodedFrame")

    def to_wire(v: EncodedFrame) -> dict[str, str]:
        return {"digest": v.digest, "png_b64": _bytes_to_wire(v.png_bytes)}

    def from_wire(v: Any) -> EncodedFrame:
        if not isinstance(v, dict) or set(v) != {"digest", "png_b64"}:
            raise _BadField("expected {digest, png_b64} object")
        digest = v["digest"]
        _check_str(digest)
        if not _SHA256_HEX_RE.match(digest):
            raise _BadField("digest must be 64 lowercase hex chars")
        try:
            return EncodedFrame(png_bytes=_bytes_from_wire(v["png_b64"]), digest=digest)
        except ValueError as exc:
            raise _BadField(str(exc)) from exc

    return _Codec(check, to_wire, from_wire)


# ---------------------------------------------------------------------------
# Payload variants (closed set, distinguished by the "tag" wire field).


class MessagePayload:
    """Base class for the closed payload variant set."""

    @property
    def tag(self) -> str:
        return type(self).__name__


@dataclass(frozen=True)
class ClientHello(MessagePayload):
    client_kind: str  # "avatar" | "agent"
    client_id: str
    locale: str


@dataclass(frozen=True)
class ServerHello(MessagePayload):
    """First service reply; carries the session id the service assigned."""

    session_id: str


@dataclass(frozen=True)
class AuthRequest(MessagePayload):
    customer_id: str
    credential: bytes


@dataclass(frozen=True)
class AuthResult(MessagePayload):
    ok: bool
    entitlements: tuple[str, ...]
    reason: str | None = None


@dataclass(frozen=True)
class ProximityUpdate(MessagePayload):
    station_id: int
    zone: ProximityZone
    distance_m: float


@dataclass(frozen=True)
class UtteranceIn(MessagePayload):
    text: str
    locale: str


@dataclass(frozen=True)
class FramePush(MessagePayload):
    station_id: int
    frame: EncodedFrame
    captured_at: int  # ms since epoch


@dataclass(frozen=True)
class AgentReply(MessagePayload):
    text: str
    intent: ServiceNeed | None
    role: AgentRole


@dataclass(frozen=True)
class RoleSwitch(MessagePayload):
    new_role: AgentRole
    reason: str


@dataclass(frozen=True)
class QueueUpdate(MessagePayload):
    position: int  # 1-based
    station_id: int
    eta_s: float


@dataclass(frozen=True)
class HandoffDirective(MessagePayload):
    target_station_id: int
    reason: str


@dataclass(frozen=True)
class ObservationReport(MessagePayload):
    station_id: int
    customer_ids_in_fov: tuple[str, ...]


@dataclass(frozen=True)
class SessionClose(MessagePayload):
    reason: str


@dataclass(frozen=True)
class ErrorMsg(MessagePayload):
    code: str
    detail: str


@dataclass(frozen=True)
class ConsentChange(MessagePayload):
    category: DataCategory
    enabled: bool


@dataclass(frozen=True)
class ConsentState(MessagePayload):
    consents: dict[str, bool]

    def __post_init__(self) -> None:
        # dict is unhashable; freeze equality semantics by sorting on encode.
        object.__setattr__(self, "consents", dict(self.consents))


_PAYLOAD_FIELDS: dict[type, tuple[tuple[str, _Codec], ...]] = {
    ClientHello: (
        ("client_kind", _str_choice(frozenset({"avatar", "agent"}))),
        ("client_id", _STR),
        ("locale", _STR),
    ),
    ServerHello: (("session_id", _session_id_codec()),),
    AuthRequest: (("customer_id", _STR), ("credential", _BYTES)),
    AuthResult: (
        ("ok", _BOOL),
        ("entitlements", _str_tuple()),
        ("reason", _opt(_STR)),
    ),
    ProximityUpdate: (
        ("station_id", _UINT),
        ("zone", _enum(ProximityZone)),
        ("distance_m", _NONNEG_FLOAT),
    ),
    UtteranceIn: (("text", _STR), ("locale", _STR)),
    FramePush: (
        ("station_id", _UINT),
        ("frame", _frame_codec()),
        ("captured_at", _UINT),
    ),
    AgentReply: (
        ("text", _STR),
        ("intent", _intent_codec()),
        ("role", _enum(AgentRole)),
    ),
    RoleSwitch: (("new_role", _enum(AgentRole)), ("reason", _STR)),
    QueueUpdate: (
        ("position", _POS_INT),
        ("station_id", _UINT),
        ("eta_s", _NONNEG_FLOAT),
    ),
    HandoffDirective: (("target_station_id", _UINT), ("reason", _STR)),
    ObservationReport: (("station_id", _UINT), ("customer_ids_in_fov", _str_tuple())),
    SessionClose: (("reason", _STR),),
    ErrorMsg: (("code", _STR), ("detail", _STR)),
    ConsentChange: (("category", _enum(DataCategory)), ("enabled", _BOOL)),
    ConsentState: (("consents", _consent_map_codec()),),
}

_TAG_TO_CLASS: dict[str, type] = {cls.__name__: cls for cls in _PAYLOAD_FIELDS}

PAYLOAD_CLASSES: tuple[type, ...] = tuple(_PAYLOAD_FIELDS)


# ---------------------------------------------------------------------------
# Envelope


@dataclass(frozen=True)
class MessageEnvelope:
    """Versioned, sequenced wire message.

    seq increases by 1 per sender within a session; sender and service keep
    independent counters. The all-zero session id is reserved for the
    pre-session ClientHello.
    """

    version: int
    session_id: str
    seq: int
    sent_at: int  # ms since epoch
    payload: MessagePayload


_ENVELOPE_KEYS = frozenset({"version", "session_id", "seq", "sent_at", "payload"})


def _validate_envelope(env: MessageEnvelope) -> None:
    if not isinstance(env.version, int) or isinstance(env.version, bool):
        raise InvalidEnvelope("version must be an integer")
    if env.version != PROTOCOL_VERSION:
        raise InvalidEnvelope(f"unsupported version {env.version}")
    try:
        _check_uint(env.seq)
    except _BadField:
        raise InvalidEnvelope("seq must be a non-negative integer") from None
    try:
        _check_uint(env.sent_at)
    except _BadField:
        raise InvalidEnvelope("sent_at must be a non-negative integer") from None
    if not isinstance(env.session_id, str) or not _SESSION_ID_RE.match(env.session_id):
        raise InvalidEnvelope("session_id must be 32 lowercase hex chars")
    cls = type(env.payload)
    if cls not in _PAYLOAD_FIELDS:
        raise InvalidEnvelope(f"unknown payload type {cls.__name__}")
    if env.session_id == NULL_SESSION_ID and cls is not ClientHello:
        raise InvalidEnvelope("all-zero session_id is reserved for ClientHello")
    for name, codec in _PAYLOAD_FIELDS[cls]:
        try:
            codec.check(getattr(env.payload, name))
        except _BadField as exc:
            raise InvalidEnvelope(f"{cls.__name__}.{name}: {exc}") from None


def encode(envelope: MessageEnvelope) -> bytes:
    """Serialize to canonical bytes: sorted keys, compact separators, UTF-8.

    Raises InvalidEnvelope if any envelope or payload invariant is violated.
    """
    _validate_envelope(envelope)
    payload = envelope.payload
    wire_payload: dict[str, Any] = {"tag": payload.tag}
    for name, codec in _PAYLOAD_FIELDS[type(payload)]:
        wire_payload[name] = codec.to_wire(getattr(payload, name))
    obj = {
        "version": envelope.version,
        "session_id": envelope.session_id,
        "seq": envelope.seq,
        "sent_at": envelope.sent_at,
        "payload": wire_payload,
    }
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def decode(data: bytes | str) -> MessageEnvelope:
    """Parse bytes into the unique envelope whose encoding canonicalizes them.

    Tolerates key reordering and JSON whitespace in the input. Raises
    MalformedMessage, UnknownPayloadTag, or VersionMismatch.
    """
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedMessage(f"not UTF-8: {exc}") from exc
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as exc:
        raise MalformedMessage(f"not JSON: {exc}") from exc
    if not isinstance(obj, dict) or set(obj) != _ENVELOPE_KEYS:
        raise MalformedMessage("envelope must have exactly the five envelope keys")

    version = obj["version"]
    if not isinstance(version, int) or isinstance(version, bool):
        raise MalformedMessage("version must be an integer")
    if version != PROTOCOL_VERSION:
        raise VersionMismatch(f"unsupported version {version}")

    wire_payload = obj["payload"]
    if not isinstance(wire_payload, dict) or "tag" not in wire_payload:
        raise MalformedMessage("payload must be an object with a tag")
    tag = wire_payload["tag"]
    if not isinstance(tag, str) or tag not in _TAG_TO_CLASS:
        raise UnknownPayloadTag(f"unknown payload tag {tag!r}")
    cls = _TAG_TO_CLASS[tag]
    spec = _PAYLOAD_FIELDS[cls]
    expected_keys = {"tag"} | {name for name, _ in spec}
    if set(wire_payload) != expected_keys:
        raise MalformedMessage(f"{tag}: wrong field set {sorted(wire_payload)}")
    kwargs: dict[str, Any] = {}
    for name, codec in spec:
        try:
            kwargs[name] = codec.from_wire(wire_payload[name])
        except _BadField as exc:
            raise MalformedMessage(f"{tag}.{name}: {exc}") from None

    env = MessageEnvelope(
        version=version,
        session_id=obj["session_id"] if isinstance(obj["session_id"], str) else "",
        seq=obj["seq"],
        sent_at=obj["sent_at"],
        payload=cls(**kwargs),
    )
    try:
        _validate_envelope(env)
    except InvalidEnvelope as exc:
        raise MalformedMessage(str(exc)) from None
    return env


# ---------------------------------------------------------------------------
# Sequence validation


@dataclass(frozen=True)
class Accept:
    pass


@dataclass(frozen=True)
class Duplicate:
    pass


@dataclass(frozen=True)
class Gap:
    missing_from: int
    missing_to: int


SequenceResult = Accept | Duplicate | Gap


def check_sequence(last_seq: int | None, incoming: MessageEnvelope) -> SequenceResult:
    """Classify an incoming seq against the highest accepted one.

    Accept iff seq == last_seq + 1 (or 0 when nothing was accepted yet);
    Duplicate iff seq <= last_seq; otherwise Gap with the missing range.
    """
    seq = incoming.seq
    expected = 0 if last_seq is None else last_seq + 1
    if seq == expected:
        return Accept()
    if last_seq is not None and seq <= last_seq:
        return Duplicate()
    return Gap(missing_from=expected, missing_to=seq - 1)


class SequenceTracker:
    """Per-sender accept-side bookkeeping on top of check_sequence."""

    def __init__(self) -> None:
        self.last_seq: int | None = None

    def check(self, incoming: MessageEnvelope) -> SequenceResult:
        result = check_sequence(self.last_seq, incoming)
        if isinstance(result, Accept):
            self.last_seq = incoming.seq
        return result
