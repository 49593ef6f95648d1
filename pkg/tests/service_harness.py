"""Randomized operation driver for the branch service.

Used by the service tests and the acceptance gate: runs random but
precondition-respecting operation sequences against a fresh service and
asserts the structural invariants after every single operation.
"""

from __future__ import annotations

import math
import random

from branchlab.ranging import BeaconIdentity
from branchlab.roles import AgentRole, ServiceNeed
from branchlab.service import (
    BranchService,
    LEGAL_TRANSITIONS,
    ServiceConfig,
    SessionState,
)
from branchlab.stations import AgentStation

ROLES = list(AgentRole)
NEEDS = list(ServiceNeed)


def make_station(station_id: int, role: AgentRole, x: float) -> AgentStation:
    return AgentStation(
        station_id=station_id,
        position=(x, 1.0),
        orientation_rad=math.pi / 2,
        role=role,
        beacon=BeaconIdentity(region_uuid=f"{7:032x}", major=1, minor=station_id),
    )


def make_service(n_stations: int = 3) -> BranchService:
    service = BranchService(config=ServiceConfig())
    for i in range(1, n_stations + 1):
        service.register_station(make_station(i, ROLES[(i - 1) % len(ROLES)], 4.0 * i), 0.0)
    return service


class OpSequenceRunner:
    """One random operation sequence with invariant checks at every step."""

    def __init__(self, seed: int, n_customers: int = 4, n_stations: int = 3):
        self.rng = random.Random(seed)
        self.service = make_service(n_stations)
        self.now = 0.0
        self.customers = [f"c{seed % 1000:03d}{i}" for i in range(n_customers)]
        for cid in self.customers:
            self.service.config.credentials[cid] = f"pw-{cid}".encode()
        self.opened = 0
        self.closed = 0

    def _tick(self) -> float:
        self.now += self.rng.uniform(0.1, 5.0)
        for sid in self.service.stations:
            self.service.heartbeat(sid, self.now)
        return self.now

    def _station_ids(self) -> list[int]:
        return list(self.service.stations)

    def run(self, steps: int = 12) -> None:
        service = self.service
        for _ in range(steps):
            now = self._tick()
            cid = self.rng.choice(self.customers)
            session = service.live_session_for(cid)
            state = session.state if session else None
            choice = self.rng.random()
            if session is None:
                station = self.rng.choice(self._station_ids())
                before = len(service.sessions)
                service.open_preconnect(cid, station, now)
                self.opened += len(service.sessions) - before
                if choice < 0.2:  # idempotency probe
                    assert service.open_preconnect(cid, station, now).session_id == (
                        service.live_session_for(cid).session_id
                    )
            elif state is SessionState.PRE_CONNECTED:
                if choice < 0.15:
                    service.close_session(session.session_id, "abandoned", now)
                    self.closed += 1
                else:
                    service.authenticate(session.session_id, f"pw-{cid}".encode(), now)
            elif state is SessionState.AUTHENTICATED:
                if choice < 0.15:
                    service.close_session(session.session_id, "abandoned", now)
                    self.closed += 1
                else:
                    service.assign_station(
                        cid,
                        self.rng.choice(NEEDS),
                        (self.rng.uniform(0, 16), self.rng.uniform(0, 14)),
                        now,
                    )
            elif state is SessionState.QUEUED:
                if choice < 0.25:
                    service.rebind_session(
                        session.session_id, self.rng.choice(self._station_ids()), now
                    )
                elif choice < 0.35:
                    service.close_session(session.session_id, "walked out", now)
                    self.closed += 1
                else:
                    station_id = session.bound_station
                    record = service.stations[station_id]
                    if record.in_service_customer is None and service.queue_head_ready(station_id):
                        service.next_in_queue(station_id, now)
            elif state is SessionState.IN_SERVICE:
                if choice < 0.25:
                    service.switch_role(
                        session.session_id, self.rng.choice(ROLES), "test switch", now
                    )
                elif choice < 0.4:
                    service.rebind_session(
                        session.session_id, self.rng.choice(self._station_ids()), now
                    )
                elif choice < 0.6:
                    service.authorize(
                        session.session_id,
                        self.rng.choice(
                            ["accounts.balance", "profile.name", "vault.keys", "faq.read"]
                        ),
                        now,
                    )
                else:
                    service.close_session(session.session_id, "served", now)
                    self.closed += 1
            self.assert_invariants()

    def assert_invariants(self) -> None:
        service = self.service
        service.check_invariants()
        # every recorded transition is in the legal table
        for _, src, dst in service.transition_log:
            assert dst in LEGAL_TRANSITIONS[src], f"illegal {src} -> {dst}"
        # conservation: every opened session is live or closed
        live = sum(1 for s in service.sessions.values() if s.state is not SessionState.CLOSED)
        closed = sum(1 for s in service.sessions.values() if s.state is SessionState.CLOSED)
        assert self.opened == live + closed
        # entitlement soundness: always exactly the active role's matrix row
        for s in service.sessions.values():
            if s.active_role is None:
                assert s.entitlements == frozenset()
            else:
                assert s.entitlements == service.config.matrix.scope(s.active_role)
