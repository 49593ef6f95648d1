"""Customer profile memorization and the tamper-evident audit chain.

Profiles store facts only for consented categories and only within the
retention TTL for the category. The audit chain is append-only: each entry
hashes its predecessor, so any retroactive edit of persisted records is
detectable by re-verification.

Hash layout (bit-exact, so verification can be re-implemented elsewhere):

    entry_hash = SHA256(
        prev_hash                      32 raw bytes (zeros for genesis)
        || seq                         u64 big-endian
        || at_ms                       u64 big-endian
        || kind code                   u8 (declared order, 0-based)
        || payload_digest              32 raw bytes
        || len(session_id)             u16 big-endian, UTF-8 byte length
        || session_id                  UTF-8 bytes
    )

Entries persist as length-prefixed records: u32 big-endian byte length
followed by the canonical JSON of the entry (sorted keys, no whitespace,
hashes as lowercase hex).
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

HASH_LEN = 32
GENESIS_PREV_HASH = bytes(HASH_LEN)

_HEX64_RE = re.compile(r"^[0-9a-f]{64}$")


class ConsentDenied(Exception):
    """Fact rejected because the customer opted out of its category."""

    def __init__(self, category: "DataCategory"):
        super().__init__(f"consent denied for {category.value}")
        self.category = category


class MalformedChainFile(Exception):
    """Persisted chain bytes do not parse as valid records."""


class DataCategory(Enum):
    IDENTITY = "Identity"
    TRANSACTIONAL = "Transactional"
    CONVERSATIONAL = "Conversational"
    VISUAL = "Visual"
    SENTIMENT = "Sentiment"


_DAY = 86400.0

DEFAULT_RETENTION_TTL_S: dict[DataCategory, float] = {
    DataCategory.IDENTITY: math.inf,
    DataCategory.TRANSACTIONAL: 90 * _DAY,
    DataCategory.CONVERSATIONAL: 30 * _DAY,
    DataCategory.VISUAL: 7 * _DAY,
    DataCategory.SENTIMENT: 7 * _DAY,
}


@dataclass(frozen=True)
class RetentionPolicy:
    ttl_s: dict[DataCategory, float] = field(
        default_factory=lambda: dict(DEFAULT_RETENTION_TTL_S)
    )

    def __post_init__(self) -> None:
        for category in DataCategory:
            ttl = self.ttl_s.get(category)
            if ttl is None or not (ttl > 0):
                raise ValueError(f"ttl for {category.value} must be positive or inf")


@dataclass(frozen=True)
class Fact:
    category: DataCategory
    key: str
    value: str
    recorded_at: float


@dataclass
class CustomerProfile:
    """Per-customer memory with per-category consent (opt-out model)."""

    customer_id: str
    display_name: str = ""
    locale: str = "en"
    consent: dict[DataCategory, bool] = field(
        default_factory=lambda: {c: True for c in DataCategory}
    )
    facts: list[Fact] = field(default_factory=list)

    def remember(self, category: DataCategory, key: str, value: str, now: float) -> Fact:
        """Store one fact; raises ConsentDenied if the category is opted out."""
        if not self.consent.get(category, False):
            raise ConsentDenied(category)
        fact = Fact(category=category, key=key, value=value, recorded_at=now)
        self.facts.append(fact)
        return fact

    def purge_expired(self, policy: RetentionPolicy, now: float) -> int:
        """Drop facts older than their category TTL; returns the removed count."""
        kept = [f for f in self.facts if now - f.recorded_at <= policy.ttl_s[f.category]]
        removed = len(self.facts) - len(kept)
        self.facts = kept
        return removed

    def forget(self, category: DataCategory) -> int:
        """Erase a category and opt out of future collection for it."""
        kept = [f for f in self.facts if f.category != category]
        removed = len(self.facts) - len(kept)
        self.facts = kept
        self.consent[category] = False
        return removed

    def fact_values(self) -> list[str]:
        return [f.value for f in self.facts]


# ---------------------------------------------------------------------------
# Audit chain


class AuditKind(Enum):
    UTTERANCE = "Utterance"
    REPLY = "Reply"
    ROLE_SWITCH = "RoleSwitch"
    AUTH_ATTEMPT = "AuthAttempt"
    AUTHORIZATION = "Authorization"
    FRAME_REF = "FrameRef"
    HANDOFF = "Handoff"
    VALIDATION_FAILURE = "ValidationFailure"


_KIND_CODE = {kind: code for code, kind in enumerate(AuditKind)}


def entry_hash_input(
    prev_hash: bytes, seq: int, at_ms: int, kind: AuditKind, payload_digest: bytes, session_id: str
) -> bytes:
    """The exact byte string hashed into entry_hash (see module docstring)."""
    sid = session_id.encode("utf-8")
    return (
        prev_hash
        + struct.pack(">Q", seq)
        + struct.pack(">Q", at_ms)
        + struct.pack(">B", _KIND_CODE[kind])
        + payload_digest
        + struct.pack(">H", len(sid))
        + sid
    )


@dataclass(frozen=True)
class AuditEntry:
    seq: int
    prev_hash: bytes
    entry_hash: bytes
    at_ms: int
    kind: AuditKind
    payload_digest: bytes
    session_id: str

    def __post_init__(self) -> None:
        for name in ("prev_hash", "entry_hash", "payload_digest"):
            value = getattr(self, name)
            if not isinstance(value, bytes) or len(value) != HASH_LEN:
                raise ValueError(f"{name} must be {HASH_LEN} raw bytes")
        if self.seq < 0 or self.at_ms < 0:
            raise ValueError("seq and at_ms must be non-negative")

    def compute_hash(self) -> bytes:
        return hashlib.sha256(
            entry_hash_input(
                self.prev_hash, self.seq, self.at_ms, self.kind, self.payload_digest, self.session_id
            )
        ).digest()

    def to_record(self) -> dict[str, Any]:
        return {
            "at_ms": self.at_ms,
            "entry_hash": self.entry_hash.hex(),
            "kind": self.kind.value,
            "payload_digest": self.payload_digest.hex(),
            "prev_hash": self.prev_hash.hex(),
            "seq": self.seq,
            "session_id": self.session_id,
        }


_RECORD_KEYS = frozenset(
    {"at_ms", "entry_hash", "kind", "payload_digest", "prev_hash", "seq", "session_id"}
)


@dataclass(frozen=True)
class ChainOk:
    pass


@dataclass(frozen=True)
class TamperedAt:
    seq: int


VerifyResult = ChainOk | TamperedAt


def _canonical_payload_bytes(payload: bytes | str | dict) -> bytes:
    if isinstance(payload, bytes):
        return payload
    if isinstance(payload, str):
        return payload.encode("utf-8")
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode(
        "utf-8"
    )


class AuditChain:
    """Append-only hash-linked log; one writer, any number of readers."""

    def __init__(self) -> None:
        self.entries: list[AuditEntry] = []

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def last_hash(self) -> bytes:
        return self.entries[-1].entry_hash if self.entries else GENESIS_PREV_HASH

    def append(
        self, kind: AuditKind, payload: bytes | str | dict, session_id: str, now: float
    ) -> AuditEntry:
        """Append one entry; payload is hashed, not stored (see PayloadStore)."""
        digest = hashlib.sha256(_canonical_payload_bytes(payload)).digest()
        at_ms = int(round(now * 1000))
        entry = AuditEntry(
            seq=len(self.entries),
            prev_hash=self.last_hash,
            entry_hash=bytes(HASH_LEN),  # placeholder, replaced below
            at_ms=at_ms,
            kind=kind,
            payload_digest=digest,
            session_id=session_id,
        )
        entry = AuditEntry(
            seq=entry.seq,
            prev_hash=entry.prev_hash,
            entry_hash=entry.compute_hash(),
            at_ms=entry.at_ms,
            kind=entry.kind,
            payload_digest=entry.payload_digest,
            session_id=entry.session_id,
        )
        self.entries.append(entry)
        return entry

    def verify(self) -> VerifyResult:
        """Recompute every hash and link; returns the first failing index."""
        prev = GENESIS_PREV_HASH
        for i, entry in enumerate(self.entries):
            if entry.seq != i:
                return TamperedAt(seq=i)
            if entry.prev_hash != prev:
                return TamperedAt(seq=i)
            if entry.compute_hash() != entry.entry_hash:
                return TamperedAt(seq=i)
            prev = entry.entry_hash
        return ChainOk()

    def export_transcript(self, session_id: str) -> list[AuditEntry]:
        """All Utterance/Reply entries for one session, in append order."""
        wanted = (AuditKind.UTTERANCE, AuditKind.REPLY)
        return [e for e in self.entries if e.session_id == session_id and e.kind in wanted]

    # -- persistence ---------------------------------------------------------

    def save(self, path: str) -> None:
        with open(path, "wb") as fh:
            for entry in self.entries:
                record = json.dumps(
                    entry.to_record(), sort_keys=True, separators=(",", ":"), ensure_ascii=False
                ).encode("utf-8")
                fh.write(struct.pack(">I", len(record)))
                fh.write(record)

    @classmethod
    def load(cls, path: str) -> "AuditChain":
        """Strictly parse a persisted chain; does not verify hashes.

        Any framing, type, or format irregularity raises MalformedChainFile,
        so a flipped byte is always either a parse failure here or a hash
        mismatch in verify().
        """
        with open(path, "rb") as fh:
            blob = fh.read()
        chain = cls()
        offset = 0
        while offset < len(blob):
            if offset + 4 > len(blob):
                raise MalformedChainFile("truncated record length")
            (length,) = struct.unpack_from(">I", blob, offset)
            offset += 4
            if offset + length > len(blob):
                raise MalformedChainFile("record extends past end of file")
            raw = blob[offset : offset + length]
            offset += length
            chain.entries.append(_entry_from_record(raw))
        return chain


def _entry_from_record(raw: bytes) -> AuditEntry:
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedChainFile(f"record is not UTF-8: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedChainFile(f"record is not JSON: {exc}") from exc
    if not isinstance(obj, dict) or set(obj) != _RECORD_KEYS:
        raise MalformedChainFile("record has wrong key set")
    for key in ("seq", "at_ms"):
        v = obj[key]
        if isinstance(v, bool) or not isinstance(v, int) or v < 0:
            raise MalformedChainFile(f"{key} must be a non-negative integer")
    for key in ("entry_hash", "prev_hash", "payload_digest"):
        v = obj[key]
        if not isinstance(v, str) or not _HEX64_RE.match(v):
            raise MalformedChainFile(f"{key} must be 64 lowercase hex chars")
    if not isinstance(obj["session_id"], str):
        raise MalformedChainFile("session_id must be a string")
    try:
        kind = AuditKind(obj["kind"])
    except (ValueError, TypeError) as exc:
        raise MalformedChainFile(f"unknown kind {obj['kind']!r}") from exc
    return AuditEntry(
        seq=obj["seq"],
        prev_hash=bytes.fromhex(obj["prev_hash"]),
        entry_hash=bytes.fromhex(obj["entry_hash"]),
        at_ms=obj["at_ms"],
        kind=kind,
        payload_digest=bytes.fromhex(obj["payload_digest"]),
        session_id=obj["session_id"],
    )


class PayloadStore:
    """Content-addressed side storage for audit payloads.

    The chain header holds only digests; bulky payloads (frames, transcripts)
    live here, keyed by digest, and are simply absent for opted-out categories.
    """

    def __init__(self) -> None:
        self._blobs: dict[str, bytes] = {}

    def put(self, payload: bytes | str | dict) -> str:
        data = _canonical_payload_bytes(payload)
        digest = hashlib.sha256(data).hexdigest()
        self._blobs[digest] = data
        return digest

    def get(self, digest: str) -> bytes | None:
        return self._blobs.get(digest)

    def __contains__(self, digest: str) -> bool:
        return digest in self._blobs

    def __len__(self) -> int:
        return len(self._blobs)
