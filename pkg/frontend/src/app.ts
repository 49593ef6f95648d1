/**
 * Demo avatar client. A distance slider stands in for walking the branch
 * floor: crossing into the Near zone opens the connection in the
 * background (pre-connect), Immediate is where you'd stand at the counter.
 * Everything rendered comes from the server message stream via the pure
 * view reducer; the only client-side facts are the slider zone and the
 * customer's own chat lines.
 */

import { BranchConnection } from "./connection.js";
import type { DataCategory, Payload } from "./protocol.js";
import { DATA_CATEGORIES } from "./protocol.js";
import { ZoneTracker } from "./zones.js";
import {
  initialView,
  noteDisconnected,
  noteSent,
  noteZone,
  reduce,
  type SessionView,
} from "./view.js";

const WS_URL = (window as any).BRANCH_WS_URL ?? "ws://127.0.0.1:8765";
const STATION_ID = 1;
const CUSTOMER_ID = "c-demo";
const LOCALE = "en";

let view: SessionView = initialView();
const tracker = new ZoneTracker();
let helloSent = false;

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el as T;
};

const connection = new BranchConnection(WS_URL, {
  onOpen: () => {
    helloSent = false;
    banner("connected", "ok");
    sayHelloAndRange();
  },
  onDown: (retryInMs) => {
    view = noteDisconnected(view);
    banner(`disconnected; retrying in ${(retryInMs / 1000).toFixed(0)} s`, "bad");
    render();
  },
  onEnvelope: (envelope) => {
    view = reduce(view, envelope);
    render();
  },
});

function sayHelloAndRange(): void {
  if (!helloSent) {
    connection.send({ tag: "ClientHello", client_kind: "avatar", client_id: CUSTOMER_ID, locale: LOCALE });
    helloSent = true;
  }
}

function sendProximity(distanceM: number): void {
  connection.send({
    tag: "ProximityUpdate",
    station_id: STATION_ID,
    zone: view.zone,
    distance_m: distanceM,
  });
}

function onSlider(): void {
  const distanceM = Number(($("distance") as HTMLInputElement).value);
  $("distance-label").textContent = `${distanceM.toFixed(1)} m`;
  const changed = tracker.update(distanceM);
  if (!changed) return;
  view = noteZone(view, changed);
  // proactive engagement: crossing into Near opens the link in the background
  if ((changed === "Near" || changed === "Immediate") && !connection.isOpen) {
    connection.connect();
  } else if (connection.isOpen) {
    sendProximity(distanceM);
  }
  render();
}

function onAuth(): void {
  const pin = ($("pin") as HTMLInputElement).value;
  connection.send({ tag: "AuthRequest", customer_id: CUSTOMER_ID, credential: btoa(pin) });
}

function onSend(): void {
  const input = $("utterance") as HTMLInputElement;
  const text = input.value.trim();
  if (!text) return;
  if (connection.send({ tag: "UtteranceIn", text, locale: LOCALE })) {
    view = noteSent(view, text, Date.now());
    input.value = "";
    render();
  }
}

function onConsentToggle(category: DataCategory, enabled: boolean): void {
  // optimistic rendering is forbidden: the checkbox snaps back to the
  // server-confirmed value on the next ConsentState
  connection.send({ tag: "ConsentChange", category, enabled });
  render();
}

function banner(text: string, kind: "ok" | "bad"): void {
  const el = $("banner");
  el.textContent = text;
  el.className = kind;
}

function render(): void {
  $("state").textContent = view.connectionState;
  $("zone").textContent = view.zone;
  $("role").textContent = view.activeRole ?? "-";
  $("queue").textContent =
    view.queuePosition === null ? "-" : `#${view.queuePosition} (eta ${view.etaS ?? "?"} s)`;
  $("station").textContent = view.stationId === null ? "-" : String(view.stationId);
  $("entitlements").textContent = view.entitlements.join(", ") || "-";
  $("error").textContent = view.lastError ?? "";

  const transcript = $("transcript");
  transcript.innerHTML = "";
  for (const line of view.transcript) {
    const div = document.createElement("div");
    div.className = line.speaker;
    div.textContent = `${line.speaker === "agent" ? "Agent" : "You"}: ${line.text}`;
    transcript.appendChild(div);
  }
  transcript.scrollTop = transcript.scrollHeight;

  const authed = view.connectionState === "authenticated" || view.connectionState === "in_service";
  ($("utterance") as HTMLInputElement).disabled = !authed;
  ($("send") as HTMLButtonElement).disabled = !authed;
  ($("send") as HTMLButtonElement).title = authed ? "" : "authenticate first";
  for (const category of DATA_CATEGORIES) {
    const box = $(`consent-${category}`) as HTMLInputElement;
    box.checked = view.consents[category];
    box.disabled = !authed;
  }
}

export function main(): void {
  const consentPanel = $("consents");
  for (const category of DATA_CATEGORIES) {
    const label = document.createElement("label");
    const box = document.createElement("input");
    box.type = "checkbox";
    box.id = `consent-${category}`;
    box.checked = true;
    box.disabled = true;
    box.addEventListener("change", () => onConsentToggle(category, box.checked));
    label.appendChild(box);
    label.appendChild(document.createTextNode(` ${category}`));
    consentPanel.appendChild(label);
  }
  ($("distance") as HTMLInputElement).addEventListener("input", onSlider);
  $("auth").addEventListener("click", onAuth);
  $("send").addEventListener("click", onSend);
  ($("utterance") as HTMLInputElement).addEventListener("keydown", (e) => {
    if ((e as KeyboardEvent).key === "Enter") onSend();
  });
  banner("walk closer to connect (slide below 3.5 m)", "ok");
  render();
}

if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", main);
}
