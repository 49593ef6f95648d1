"""branchlab: proximity-triggered virtual agent stations for branch service.

A library plus a deterministic simulator: beacon-ranging-driven proactive
session establishment, physically placed camera stations with independent
fields of view, a central branch service (queues, role switching,
least-privilege entitlements, location-based rebinding), a stateless
vision-language inference gateway, consent-aware customer memory, and a
hash-chained audit log.
"""

from .ranging import (
    BeaconIdentity,
    ProximityEvent,
    ProximityZone,
    RangingConfig,
    ZoneTracker,
    classify,
    estimate_distance,
    rssi_at,
    smooth,
)
from .records import (
    AuditChain,
    AuditEntry,
    AuditKind,
    ChainOk,
    ConsentDenied,
    CustomerProfile,
    DataCategory,
    PayloadStore,
    RetentionPolicy,
    TamperedAt,
)
from .roles import AgentRole, Entitlement, RoleScopeMatrix, ServiceNeed
from .protocol import (
    EncodedFrame,
    MessageEnvelope,
    MessagePayload,
    check_sequence,
    decode,
    encode,
)
from .stations import (
    AgentStation,
    Frame,
    FrameSource,
    capture_frame,
    decode_frame,
    encode_frame,
    in_field_of_view,
    observe,
)
from .inference import (
    InferenceRequest,
    InferenceResponse,
    MockBackend,
    PromptTemplate,
    RemoteBackend,
    SessionSnapshot,
    ValidationPolicy,
    build_prompt,
    infer,
    sentiment,
    translate,
    validate,
)
from .service import (
    Allow,
    BranchService,
    CrowdReport,
    Deny,
    QueueEntry,
    ServiceConfig,
    Session,
    SessionState,
    select_station,
)
from .sim import (
    Directive,
    FloorPlan,
    MetricsReport,
    ScriptedArrival,
    SimConfig,
    compare_baseline,
    default_floor,
    emit_metrics,
    read_metrics,
    run,
)

__version__ = "0.1.0"
