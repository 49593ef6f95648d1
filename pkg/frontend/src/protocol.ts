/**
 * Wire protocol mirror for the branch service.
 *
 * One envelope per WebSocket text message. Canonical encoding is JSON with
 * recursively sorted keys and no insignificant whitespace; the envelope
 * carries version (always 1), a 32-hex session id (all-zero only for the
 * pre-session ClientHello), a per-sender sequence number, a millisecond
 * timestamp, and a tagged payload.
 */

export const PROTOCOL_VERSION = 1;
export const NULL_SESSION_ID = "0".repeat(32);

export type Zone = "Unknown" | "Far" | "Near" | "Immediate";
export type Role = "CustomerService" | "FinancialAdvisor" | "SalesAssociate";
export type Intent = "GeneralInquiry" | "TransactionRequest" | "InformationLookup" | "Unknown";
export type DataCategory = "Identity" | "Transactional" | "Conversational" | "Visual" | "Sentiment";

export const DATA_CATEGORIES: DataCategory[] = [
  "Identity",
  "Transactional",
  "Conversational",
  "Visual",
  "Sentiment",
];

export type Payload =
  | { tag: "ClientHello"; client_kind: "avatar" | "agent"; client_id: string; locale: string }
  | { tag: "ServerHello"; session_id: string }
  | { tag: "AuthRequest"; customer_id: string; credential: string } // base64
  | { tag: "AuthResult"; ok: boolean; entitlements: string[]; reason: string | null }
  | { tag: "ProximityUpdate"; station_id: number; zone: Zone; distance_m: number }
  | { tag: "UtteranceIn"; text: string; locale: string }
  | { tag: "FramePush"; station_id: number; frame: { digest: string; png_b64: string }; captured_at: number }
  | { tag: "AgentReply"; text: string; intent: Intent; role: Role }
  | { tag: "RoleSwitch"; new_role: Role; reason: string }
  | { tag: "QueueUpdate"; position: number; station_id: number; eta_s: number }
  | { tag: "HandoffDirective"; target_station_id: number; reason: string }
  | { tag: "ObservationReport"; station_id: number; customer_ids_in_fov: string[] }
  | { tag: "SessionClose"; reason: string }
  | { tag: "ErrorMsg"; code: string; detail: string }
  | { tag: "ConsentChange"; category: DataCategory; enabled: boolean }
  | { tag: "ConsentState"; consents: Partial<Record<DataCategory, boolean>> };

export interface Envelope {
  version: number;
  session_id: string;
  seq: number;
  sent_at: number;
  payload: Payload;
}

const PAYLOAD_TAGS = new Set<string>([
  "ClientHello",
  "ServerHello",
  "AuthRequest",
  "AuthResult",
  "ProximityUpdate",
  "UtteranceIn",
  "FramePush",
  "AgentReply",
  "RoleSwitch",
  "QueueUpdate",
  "HandoffDirective",
  "ObservationReport",
  "SessionClose",
  "ErrorMsg",
  "ConsentChange",
  "ConsentState",
]);

const SESSION_ID_RE = /^[0-9a-f]{32}$/;

export class ProtocolError extends Error {}

/** JSON.stringify with recursively sorted object keys (canonical form). */
export function canonicalJson(value: unknown): string {
  if (value === null || typeof value !== "object") {
    return JSON.stringify(value);
  }
  if (Array.isArray(value)) {
    return "[" + value.map(canonicalJson).join(",") + "]";
  }
  const entries = Object.entries(value as Record<string, unknown>)
    .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
    .map(([k, v]) => JSON.stringify(k) + ":" + canonicalJson(v));
  return "{" + entries.join(",") + "}";
}

export function encode(envelope: Envelope): string {
  if (envelope.version !== PROTOCOL_VERSION) {
    throw new ProtocolError(`unsupported version ${envelope.version}`);
  }
  if (!SESSION_ID_RE.test(envelope.session_id)) {
    throw new ProtocolError("session_id must be 32 lowercase hex chars");
  }
  if (envelope.session_id === NULL_SESSION_ID && envelope.payload.tag !== "ClientHello") {
    throw new ProtocolError("all-zero session_id is reserved for ClientHello");
  }
  return canonicalJson(envelope);
}

export function decode(text: string): Envelope {
  let obj: unknown;
  try {
    obj = JSON.parse(text);
  } catch (err) {
    throw new ProtocolError(`not JSON: ${String(err)}`);
  }
  if (typeof obj !== "object" || obj === null || Array.isArray(obj)) {
    throw new ProtocolError("envelope must be an object");
  }
  const env = obj as Record<string, unknown>;
  const keys = Object.keys(env).sort();
  if (keys.join(",") !== "payload,sent_at,seq,session_id,version") {
    throw new ProtocolError("envelope must have exactly the five envelope keys");
  }
  if (typeof env.version !== "number" || env.version !== PROTOCOL_VERSION) {
    throw new ProtocolError(`unsupported version ${String(env.version)}`);
  }
  if (typeof env.session_id !== "string" || !SESSION_ID_RE.test(env.session_id)) {
    throw new ProtocolError("bad session_id");
  }
  if (typeof env.seq !== "number" || env.seq < 0 || !Number.isInteger(env.seq)) {
    throw new ProtocolError("bad seq");
  }
  if (typeof env.sent_at !== "number" || env.sent_at < 0) {
    throw new ProtocolError("bad sent_at");
  }
  const payload = env.payload as Record<string, unknown> | null;
  if (typeof payload !== "object" || payload === null || typeof payload.tag !== "string") {
    throw new ProtocolError("payload must be an object with a tag");
  }
  if (!PAYLOAD_TAGS.has(payload.tag)) {
    throw new ProtocolError(`unknown payload tag ${payload.tag}`);
  }
  if (env.session_id === NULL_SESSION_ID && payload.tag !== "ClientHello") {
    throw new ProtocolError("all-zero session_id is reserved for ClientHello");
  }
  return {
    version: env.version,
    session_id: env.session_id,
    seq: env.seq,
    sent_at: env.sent_at,
    payload: payload as unknown as Payload,
  };
}

export function makeEnvelope(sessionId: string, seq: number, payload: Payload): Envelope {
  return {
    version: PROTOCOL_VERSION,
    session_id: sessionId,
    seq,
    sent_at: Date.now(),
    payload,
  };
}
