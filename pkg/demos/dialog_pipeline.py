"""One customer's session driven straight through the branch service.

Shows the whole arc in a dozen calls: pre-connect, authenticate (least
privilege: the default CustomerService entitlement row), queueing, serving,
an intent-driven role switch, a grounded balance answer, a deny-by-default
authorization, and the hallucination guard swapping in the fallback reply.
"""

import math

from branchlab import AgentStation, BeaconIdentity, BranchService, ServiceConfig
from branchlab.inference import MockBackend
from branchlab.records import DataCategory
from branchlab.roles import AgentRole, ServiceNeed

service = BranchService(config=ServiceConfig(credentials={"c0001": b"pin-1234"}))
service.register_station(
    AgentStation(
        station_id=1,
        position=(6.0, 1.0),
        orientation_rad=math.pi / 2,
        role=AgentRole.CUSTOMER_SERVICE,
        beacon=BeaconIdentity(region_uuid=f"{1:032x}", major=1, minor=1),
    ),
    0.0,
)
profile = service.get_profile("c0001")
profile.display_name = "Ana"
profile.remember(DataCategory.TRANSACTIONAL, "balance", "$2,450.10", 0.0)

session = service.open_preconnect("c0001", station_id=1, at=10.0)
print(f"pre-connected: state={session.state.value}, entitlements={len(session.entitlements)}")

service.authenticate(session.session_id, b"pin-1234", 11.0)
print(f"authenticated: role={session.active_role.value}")
print(f"  entitlements: {sorted(e.resource for e in session.entitlements)}")

service.heartbeat(1, 12.0)  # keep the station's liveness fresh
service.assign_station("c0001", ServiceNeed.GENERAL_INQUIRY, (10.0, 14.0), 12.0)
service.next_in_queue(1, 13.0)
print(f"in service at station {session.bound_station}")

print("\ncustomer: what is my balance?")
reply = service.handle_utterance(session.session_id, "what is my balance?", "en", 14.0)
print(f"agent ({reply.role.value}): {reply.text}")
print(f"  role switched to {session.active_role.value} by intent escalation")
print(f"  entitlements now: {sorted(e.resource for e in session.entitlements)}")

verdict = service.authorize(session.session_id, "accounts.transact", 15.0)
print(f"\nauthorize('accounts.transact'): {verdict} (not in any default row)")

print("\nswapping in a backend that cites amounts that are not in the facts...")
service.backend = MockBackend(hallucinate_amounts=True)
reply = service.handle_utterance(session.session_id, "and my savings balance?", "en", 16.0)
print(f"agent: {reply.text}")
print("  (the grounding check rejected the made-up amount and used the fallback)")

print("\naudit trail for this session:")
for entry in service.chain.entries:
    print(f"  seq {entry.seq:2d}  {entry.kind.value}")
print(f"chain verification: {service.chain.verify()}")
