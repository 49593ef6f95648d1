"""Profile memory (consent, retention) and audit chain tests."""

import hashlib
import math
import random
import struct

import pytest
from hypothesis import given, strategies as st

from branchlab.records import (
    AuditChain,
    AuditKind,
    ChainOk,
    ConsentDenied,
    CustomerProfile,
    DataCategory,
    MalformedChainFile,
    PayloadStore,
    RetentionPolicy,
    TamperedAt,
)

DAY = 86400.0
SID = f"{1:032x}"


class TestRemember:
    def test_consent_denied_leaves_facts_unchanged(self):
        profile = CustomerProfile(customer_id="c1")
        profile.consent[DataCategory.VISUAL] = False
        with pytest.raises(ConsentDenied):
            profile.remember(DataCategory.VISUAL, "frame", "abc", 0.0)
        assert profile.facts == []

    def test_default_consent_allows(self):
        profile = CustomerProfile(customer_id="c1")
        profile.remember(DataCategory.CONVERSATIONAL, "topic", "rates", 1.0)
        assert len(profile.facts) == 1

    def test_read_back_identical(self):
        profile = CustomerProfile(customer_id="c1")
        profile.remember(DataCategory.IDENTITY, "name", "Ana", 1.0)
        fact = profile.facts[-1]
        assert (fact.key, fact.value, fact.recorded_at) == ("name", "Ana", 1.0)

    def test_does_not_mutate_other_facts(self):
        profile = CustomerProfile(customer_id="c1")
        profile.remember(DataCategory.IDENTITY, "name", "Ana", 1.0)
        before = list(profile.facts)
        profile.remember(DataCategory.SENTIMENT, "tone", "1", 2.0)
        assert profile.facts[:1] == before


class TestPurge:
    def test_fresh_facts_kept(self):
        profile = CustomerProfile(customer_id="c1")
        profile.remember(DataCategory.CONVERSATIONAL, "a", "x", 100.0)
        assert profile.purge_expired(RetentionPolicy(), now=101.0) == 0

    def test_visual_fact_expires_after_seven_days(self):
        profile = CustomerProfile(customer_id="c1")
        profile.remember(DataCategory.VISUAL, "frame", "d", 0.0)
        assert profile.purge_expired(RetentionPolicy(), now=8 * DAY) == 1
        assert profile.facts == []

    def test_identity_never_expires(self):
        profile = CustomerProfile(customer_id="c1")
        profile.remember(DataCategory.IDENTITY, "name", "Ana", 0.0)
        assert profile.purge_expired(RetentionPolicy(), now=1e12) == 0

    def test_randomized_matches_filter_oracle(self):
        rng = random.Random(17)
        policy = RetentionPolicy()
        for _ in range(30):
            profile = CustomerProfile(customer_id="c1")
            ages = []
            for i in range(40):
                category = rng.choice(list(DataCategory))
                age = rng.uniform(0, 200 * DAY)
                profile.remember(category, f"k{i}", "v", 1000.0 * DAY - age)
                ages.append((category, age))
            now = 1000.0 * DAY
            expected_removed = sum(1 for cat, age in ages if age > policy.ttl_s[cat])
            assert profile.purge_expired(policy, now) == expected_removed

    def test_purge_idempotent(self):
        profile = CustomerProfile(customer_id="c1")
        for i in range(10):
            profile.remember(DataCategory.SENTIMENT, f"k{i}", "v", i * DAY)
        policy = RetentionPolicy()
        profile.purge_expired(policy, now=20 * DAY)
        assert profile.purge_expired(policy, now=20 * DAY) == 0

    def test_ttl_must_be_positive(self):
        with pytest.raises(ValueError):
            RetentionPolicy(ttl_s={c: 0.0 for c in DataCategory})


class TestForget:
    def test_forget_empty_category_sets_consent_false(self):
        profile = CustomerProfile(customer_id="c1")
        assert profile.forget(DataCategory.VISUAL) == 0
        assert profile.consent[DataCategory.VISUAL] is False

    def test_forget_then_remember_denied(self):
        profile = CustomerProfile(customer_id="c1")
        profile.remember(DataCategory.CONVERSATIONAL, "a", "x", 0.0)
        assert profile.forget(DataCategory.CONVERSATIONAL) == 1
        with pytest.raises(ConsentDenied):
            profile.remember(DataCategory.CONVERSATIONAL, "b", "y", 1.0)

    def test_other_categories_untouched(self):
        profile = CustomerProfile(customer_id="c1")
        profile.remember(DataCategory.IDENTITY, "name", "Ana", 0.0)
        profile.remember(DataCategory.VISUAL, "frame", "d", 0.0)
        profile.forget(DataCategory.VISUAL)
        assert [f.category for f in profile.facts] == [DataCategory.IDENTITY]


class TestAuditChain:
    def test_genesis_prev_hash_is_zeros(self):
        chain = AuditChain()
        entry = chain.append(AuditKind.UTTERANCE, b"x", SID, 0.0)
        assert entry.prev_hash == bytes(32)

    def test_genesis_hash_frozen_value(self):
        # Expected value computed by an independent implementation of the
        # documented byte layout (prev || seq u64be || at u64be || kind u8
        # || payload_digest || len u16be || session utf-8), sha-256.
        chain = AuditChain()
        entry = chain.append(AuditKind.UTTERANCE, b'{"text":"hello"}', SID, 12.345)
        assert entry.entry_hash.hex() == (
            "9c8575d12491c94b8fc6487bdfa017cab6a7b43e969eb77c153f011f716dca17"
        )

    def test_hash_matches_independent_recompute(self):
        chain = AuditChain()
        chain.append(AuditKind.REPLY, {"text": "hi"}, SID, 1.0)
        chain.append(AuditKind.ROLE_SWITCH, {"role": "FinancialAdvisor"}, SID, 2.0)
        kind_codes = {kind: i for i, kind in enumerate(AuditKind)}
        prev = bytes(32)
        for entry in chain.entries:
            sid = entry.session_id.encode()
            material = (
                prev
                + struct.pack(">Q", entry.seq)
                + struct.pack(">Q", entry.at_ms)
                + struct.pack(">B", kind_codes[entry.kind])
                + entry.payload_digest
                + struct.pack(">H", len(sid))
                + sid
            )
            assert entry.entry_hash == hashlib.sha256(material).digest()
            prev = entry.entry_hash

    def test_two_appends_link(self):
        chain = AuditChain()
        first = chain.append(AuditKind.UTTERANCE, b"a", SID, 0.0)
        second = chain.append(AuditKind.REPLY, b"b", SID, 1.0)
        assert (first.seq, second.seq) == (0, 1)
        assert second.prev_hash == first.entry_hash

    def test_empty_chain_verifies(self):
        assert isinstance(AuditChain().verify(), ChainOk)

    def test_valid_chain_verifies(self):
        chain = AuditChain()
        for i in range(10):
            chain.append(AuditKind.UTTERANCE, f"payload {i}", SID, float(i))
        assert isinstance(chain.verify(), ChainOk)

    def test_in_memory_tamper_detected(self):
        import dataclasses

        chain = AuditChain()
        for i in range(6):
            chain.append(AuditKind.REPLY, f"p{i}", SID, float(i))
        chain.entries[4] = dataclasses.replace(chain.entries[4], at_ms=999999)
        assert chain.verify() == TamperedAt(4)

    def test_export_transcript_filters_and_orders(self):
        chain = AuditChain()
        other = f"{2:032x}"
        chain.append(AuditKind.UTTERANCE, b"a", SID, 0.0)
        chain.append(AuditKind.UTTERANCE, b"b", other, 1.0)
        chain.append(AuditKind.ROLE_SWITCH, b"c", SID, 2.0)
        chain.append(AuditKind.REPLY, b"d", SID, 3.0)
        transcript = chain.export_transcript(SID)
        assert [e.seq for e in transcript] == [0, 3]
        assert chain.export_transcript(f"{9:032x}") == []

    def test_append_only_length_grows(self):
        chain = AuditChain()
        lengths = []
        for i in range(5):
            chain.append(AuditKind.HANDOFF, b"x", SID, float(i))
            lengths.append(len(chain))
        assert lengths == sorted(lengths)


class TestChainPersistence:
    def test_save_load_roundtrip(self, tmp_path):
        chain = AuditChain()
        for i in range(7):
            chain.append(AuditKind.AUTH_ATTEMPT, {"n": i}, SID, i * 0.5)
        path = str(tmp_path / "chain.bin")
        chain.save(path)
        loaded = AuditChain.load(path)
        assert loaded.entries == chain.entries
        assert isinstance(loaded.verify(), ChainOk)

    def test_empty_chain_roundtrip(self, tmp_path):
        path = str(tmp_path / "chain.bin")
        AuditChain().save(path)
        assert AuditChain.load(path).entries == []

    def test_every_byte_flip_detected_small(self, tmp_path):
        chain = AuditChain()
        for i in range(3):
            chain.append(AuditKind.UTTERANCE, f"payload {i}", SID, float(i))
        path = str(tmp_path / "chain.bin")
        chain.save(path)
        blob = open(path, "rb").read()
        tampered_path = str(tmp_path / "tampered.bin")
        for pos in range(len(blob)):
            mutated = bytearray(blob)
            mutated[pos] ^= 0x01
            with open(tampered_path, "wb") as fh:
                fh.write(mutated)
            try:
                loaded = AuditChain.load(tampered_path)
            except MalformedChainFile:
                continue  # detected at parse time
            assert not isinstance(loaded.verify(), ChainOk), f"undetected flip at byte {pos}"

    def test_trailing_garbage_rejected(self, tmp_path):
        chain = AuditChain()
        chain.append(AuditKind.REPLY, b"x", SID, 0.0)
        path = str(tmp_path / "chain.bin")
        chain.save(path)
        with open(path, "ab") as fh:
            fh.write(b"\x00")
        with pytest.raises(MalformedChainFile):
            AuditChain.load(path)


class TestPayloadStore:
    def test_put_get(self):
        store = PayloadStore()
        digest = store.put(b"frame bytes")
        assert store.get(digest) == b"frame bytes"
        assert digest in store

    def test_content_addressed(self):
        store = PayloadStore()
        assert store.put(b"same") == store.put(b"same")
        assert len(store) == 1


@given(st.lists(st.sampled_from(list(AuditKind)), min_size=0, max_size=20))
def test_chain_always_verifies_after_any_append_sequence(kinds):
    chain = AuditChain()
    for i, kind in enumerate(kinds):
        chain.append(kind, f"payload-{i}", SID, float(i))
    assert isinstance(chain.verify(), ChainOk)
    assert [e.seq for e in chain.entries] == list(range(len(kinds)))


@given(
    st.lists(
        st.tuples(st.sampled_from(list(DataCategory)), st.floats(0, 365 * DAY)),
        max_size=30,
    )
)
def test_consent_soundness_replay(ops):
    """Every stored fact's category had consent at record time."""
    profile = CustomerProfile(customer_id="c1")
    denied: set[DataCategory] = set()
    for i, (category, when) in enumerate(ops):
        if i % 5 == 4:
            profile.forget(category)
            denied.add(category)
            continue
        try:
            profile.remember(category, f"k{i}", "v", when)
            assert category not in denied
        except ConsentDenied:
            assert category in denied
    for fact in profile.facts:
        assert fact.category not in denied
