"""Hash-chained audit log: append, export, persist, tamper, detect.

Every session event hashes its predecessor, so editing any persisted byte
is detectable by re-verification. Payloads live in a content-addressed
side store keyed by digest; the chain itself holds only header fields.
"""

import tempfile

from branchlab import AuditChain, AuditKind, ChainOk, PayloadStore

SESSION = f"{77:032x}"

chain = AuditChain()
store = PayloadStore()

events = [
    (AuditKind.AUTH_ATTEMPT, {"customer_id": "c0001", "ok": True}),
    (AuditKind.UTTERANCE, {"text": "what is my balance?"}),
    (AuditKind.ROLE_SWITCH, {"new_role": "FinancialAdvisor", "reason": "intent escalation"}),
    (AuditKind.AUTHORIZATION, {"resource": "accounts.balance", "allowed": True}),
    (AuditKind.REPLY, {"text": "Here is the information you asked for: $120.00."}),
]
for i, (kind, payload) in enumerate(events):
    digest = store.put(payload)
    entry = chain.append(kind, payload, SESSION, now=float(i))
    assert entry.payload_digest.hex() == digest

print(f"chain of {len(chain)} entries, verify: {chain.verify()}")
print("transcript export (Utterance/Reply only):")
for entry in chain.export_transcript(SESSION):
    print(f"  seq {entry.seq}: {entry.kind.value}, payload {store.get(entry.payload_digest.hex())}")

with tempfile.NamedTemporaryFile(suffix=".bin", delete=False) as fh:
    path = fh.name
chain.save(path)
print(f"\npersisted to {path}")
print(f"reload + verify: {AuditChain.load(path).verify()}")

blob = bytearray(open(path, "rb").read())
blob[len(blob) // 2] ^= 0x01  # flip one bit in the middle of the file
with open(path, "wb") as fh:
    fh.write(bytes(blob))
try:
    verdict = AuditChain.load(path).verify()
except Exception as exc:
    verdict = f"rejected at parse time: {type(exc).__name__}"
print(f"after flipping one bit:      {verdict}")
assert not isinstance(verdict, ChainOk)
