"""Agent roles, service needs, and the least-privilege entitlement matrix.

A session's entitlements are always exactly one matrix row: switching roles
replaces the set rather than accumulating grants.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum


class AgentRole(Enum):
    CUSTOMER_SERVICE = "CustomerService"
    FINANCIAL_ADVISOR = "FinancialAdvisor"
    SALES_ASSOCIATE = "SalesAssociate"


class ServiceNeed(Enum):
    GENERAL_INQUIRY = "GeneralInquiry"
    TRANSACTION_REQUEST = "TransactionRequest"
    INFORMATION_LOOKUP = "InformationLookup"


@dataclass(frozen=True)
class Entitlement:
    """Permission to touch one resource path, tied to the granting role."""

    resource: str
    granted_by_role: AgentRole


_BASE_RESOURCES = frozenset({"profile.name", "queue.position", "faq.read"})

DEFAULT_ROLE_RESOURCES: dict[AgentRole, frozenset[str]] = {
    AgentRole.CUSTOMER_SERVICE: _BASE_RESOURCES,
    AgentRole.FINANCIAL_ADVISOR: _BASE_RESOURCES | {"accounts.balance", "accounts.history"},
    AgentRole.SALES_ASSOCIATE: _BASE_RESOURCES | {"catalog.read", "offers.create"},
}

# Which service needs each role can serve. Every role handles general
# inquiries; specialists add their specialty. Lookups default to the
# financial advisor in a banking branch, sales associates also qualify.
DEFAULT_ROLE_CAPABILITIES: dict[AgentRole, frozenset[ServiceNeed]] = {
    AgentRole.CUSTOMER_SERVICE: frozenset({ServiceNeed.GENERAL_INQUIRY}),
    AgentRole.FINANCIAL_ADVISOR: frozenset(
        {ServiceNeed.GENERAL_INQUIRY, ServiceNeed.TRANSACTION_REQUEST, ServiceNeed.INFORMATION_LOOKUP}
    ),
    AgentRole.SALES_ASSOCIATE: frozenset(
        {ServiceNeed.GENERAL_INQUIRY, ServiceNeed.INFORMATION_LOOKUP}
    ),
}

# Which role a need should be escalated to when the active role cannot serve it.
DEFAULT_PREFERRED_ROLE: dict[ServiceNeed, AgentRole] = {
    ServiceNeed.GENERAL_INQUIRY: AgentRole.CUSTOMER_SERVICE,
    ServiceNeed.TRANSACTION_REQUEST: AgentRole.FINANCIAL_ADVISOR,
    ServiceNeed.INFORMATION_LOOKUP: AgentRole.FINANCIAL_ADVISOR,
}


class UnknownRole(Exception):
    """Role is not a member of the closed role set."""


@dataclass
class RoleScopeMatrix:
    """Configured role -> resource scope; the single source of entitlements.

    No entitlement exists outside the matrix, and authorize() is deny-by-default
    for any resource string not in the active row.
    """

    resources: dict[AgentRole, frozenset[str]] = field(
        default_factory=lambda: dict(DEFAULT_ROLE_RESOURCES)
    )
    capabilities: dict[AgentRole, frozenset[ServiceNeed]] = field(
        default_factory=lambda: dict(DEFAULT_ROLE_CAPABILITIES)
    )
    preferred_role: dict[ServiceNeed, AgentRole] = field(
        default_factory=lambda: dict(DEFAULT_PREFERRED_ROLE)
    )

    def __post_init__(self) -> None:
        for role in AgentRole:
            if role not in self.resources:
                raise UnknownRole(f"matrix row missing for {role.value}")
            if role not in self.capabilities:
                raise UnknownRole(f"capability set missing for {role.value}")
        for need in ServiceNeed:
            if need not in self.preferred_role:
                raise UnknownRole(f"preferred role missing for {need.value}")

    def scope(self, role: AgentRole) -> frozenset[Entitlement]:
        """Exactly the matrix row for `role`, as entitlement objects."""
        if role not in self.resources:
            raise UnknownRole(f"no such role: {role!r}")
        return frozenset(
            Entitlement(resource=r, granted_by_role=role) for r in self.resources[role]
        )

    def can_serve(self, role: AgentRole, need: ServiceNeed) -> bool:
        return need in self.capabilities[role]

    def role_for_need(self, need: ServiceNeed) -> AgentRole:
        return self.preferred_role[need]
