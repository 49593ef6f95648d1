/**
 * Pure projection of the server message stream into the session view.
 *
 * The state machine lives on the server; this reducer never invents
 * state. Replaying a recorded stream through `reduce` reproduces the
 * identical view, which is exactly what the tests do. Customer-typed
 * lines enter via `noteSent` (they are client-originated facts); all
 * other fields change only on server messages.
 */

import type { DataCategory, Envelope, Role, Zone } from "./protocol.js";
import { DATA_CATEGORIES } from "./protocol.js";

export type ConnectionState =
  | "disconnected"
  | "preconnected"
  | "authenticated"
  | "in_service"
  | "closed";

export interface TranscriptLine {
  speaker: "customer" | "agent";
  text: string;
  at: number;
}

export interface SessionView {
  connectionState: ConnectionState;
  sessionId: string | null;
  zone: Zone;
  queuePosition: number | null;
  etaS: number | null;
  stationId: number | null;
  activeRole: Role | null;
  entitlements: string[];
  transcript: TranscriptLine[];
  consents: Record<DataCategory, boolean>;
  lastError: string | null;
  closeReason: string | null;
}

export function initialView(): SessionView {
  const consents = {} as Record<DataCategory, boolean>;
  for (const category of DATA_CATEGORIES) consents[category] = true;
  return {
    connectionState: "disconnected",
    sessionId: null,
    zone: "Unknown",
    queuePosition: null,
    etaS: null,
    stationId: null,
    activeRole: null,
    entitlements: [],
    transcript: [],
    consents,
    lastError: null,
    closeReason: null,
  };
}

/** Apply one server envelope; returns a new view (input is not mutated). */
export function reduce(view: SessionView, envelope: Envelope): SessionView {
  const next: SessionView = {
    ...view,
    transcript: view.transcript,
    entitlements: view.entitlements,
    consents: view.consents,
  };
  const p = envelope.payload;
  switch (p.tag) {
    case "ServerHello":
      next.sessionId = p.session_id;
      next.connectionState = "preconnected";
      break;
    case "AuthResult":
      if (p.ok) {
        next.connectionState = "authenticated";
        next.entitlements = [...p.entitlements];
        next.lastError = null;
      } else {
        next.lastError = p.reason ?? "authentication failed";
      }
      break;
    case "QueueUpdate":
      next.queuePosition = p.position;
      next.etaS = p.eta_s;
      next.stationId = p.station_id;
      // a queue position means we are waiting again, not being served
      if (view.connectionState === "in_service") {
        next.connectionState = "authenticated";
      }
      break;
    case "AgentReply":
      next.transcript = [
        ...view.transcript,
        { speaker: "agent", text: p.text, at: envelope.sent_at },
      ];
      // the agent only addresses this customer once their service started
      if (view.connectionState === "authenticated") {
        next.connectionState = "in_service";
        next.queuePosition = null;
        next.etaS = null;
      }
      break;
    case "RoleSwitch":
      next.activeRole = p.new_role;
      break;
    case "HandoffDirective":
      next.stationId = p.target_station_id;
      break;
    case "ConsentState":
      next.consents = { ...view.consents, ...p.consents };
      break;
    case "SessionClose":
      next.connectionState = "closed";
      next.closeReason = p.reason;
      next.queuePosition = null;
      next.etaS = null;
      break;
    case "ErrorMsg":
      next.lastError = `${p.code}: ${p.detail}`;
      break;
    default:
      // server-to-server payloads (FramePush, ObservationReport, ...) and
      // client-originated tags carry nothing for this view
      break;
  }
  return next;
}

export function replay(envelopes: Envelope[], from: SessionView = initialView()): SessionView {
  return envelopes.reduce(reduce, from);
}

/** The customer's own utterance, appended when it is sent. */
export function noteSent(view: SessionView, text: string, at: number): SessionView {
  return {
    ...view,
    transcript: [...view.transcript, { speaker: "customer", text, at }],
  };
}

export function noteZone(view: SessionView, zone: Zone): SessionView {
  return { ...view, zone };
}

export function noteDisconnected(view: SessionView): SessionView {
  if (view.connectionState === "closed") return view;
  return { ...view, connectionState: "disconnected" };
}
