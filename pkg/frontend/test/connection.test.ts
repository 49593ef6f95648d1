import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import {
  BranchConnection,
  RECONNECT_CAP_MS,
  reconnectDelayMs,
} from "../src/connection.js";
import { NULL_SESSION_ID, decode, encode } from "../src/protocol.js";

const SID = "0".repeat(31) + "9";

class FakeSocket {
  static instances: FakeSocket[] = [];
  readyState = 0; // CONNECTING
  sent: string[] = [];
  onopen: (() => void) | null = null;
  onmessage: ((event: { data: string }) => void) | null = null;
  onclose: (() => void) | null = null;
  onerror: (() => void) | null = null;

  constructor(public url: string) {
    FakeSocket.instances.push(this);
  }

  open() {
    this.readyState = 1; // OPEN
    this.onopen?.();
  }

  receive(data: string) {
    this.onmessage?.({ data });
  }

  send(data: string) {
    this.sent.push(data);
  }

  close() {
    this.readyState = 3; // CLOSED
    this.onclose?.();
  }
}

function makeConnection(events: Partial<Parameters<typeof handlers>[0]> = {}) {
  const received: unknown[] = [];
  const downs: number[] = [];
  const errors: string[] = [];
  const connection = new BranchConnection(
    "ws://test.invalid",
    {
      onEnvelope: (envelope) => received.push(envelope),
      onOpen: () => {},
      onDown: (ms) => downs.push(ms),
      onProtocolError: (err) => errors.push(err.message),
      ...events,
    },
    (url) => new FakeSocket(url) as unknown as WebSocket,
  );
  return { connection, received, downs, errors };
}

function handlers(events: {
  onEnvelope: unknown;
  onOpen: unknown;
  onDown: unknown;
  onProtocolError: unknown;
}) {
  return events;
}

beforeEach(() => {
  FakeSocket.instances = [];
  vi.useFakeTimers();
});

afterEach(() => {
  vi.useRealTimers();
});

describe("reconnectDelayMs", () => {
  it("doubles from 1 s and caps at 30 s", () => {
    expect([0, 1, 2, 3, 4, 5, 6].map(reconnectDelayMs)).toEqual([
      1000, 2000, 4000, 8000, 16000, 30000, 30000,
    ]);
    expect(reconnectDelayMs(50)).toBe(RECONNECT_CAP_MS);
  });
});

describe("BranchConnection", () => {
  it("retries with the exponential schedule while the server is down", () => {
    const { connection, downs } = makeConnection();
    connection.connect();
    for (let i = 0; i < 4; i++) {
      FakeSocket.instances.at(-1)!.close();
      vi.runOnlyPendingTimers();
    }
    expect(downs).toEqual([1000, 2000, 4000, 8000]);
    connection.close();
  });

  it("drops malformed server messages but keeps the connection", () => {
    const { connection, received, errors } = makeConnection();
    connection.connect();
    const socket = FakeSocket.instances.at(-1)!;
    socket.open();
    socket.receive("garbage");
    expect(received).toHaveLength(0);
    expect(errors).toHaveLength(1);
    socket.receive(
      encode({
        version: 1,
        session_id: SID,
        seq: 0,
        sent_at: 1,
        payload: { tag: "ServerHello", session_id: SID },
      }),
    );
    expect(received).toHaveLength(1);
    connection.close();
  });

  it("only the hello goes out before the server assigns a session id", () => {
    const { connection } = makeConnection();
    connection.connect();
    const socket = FakeSocket.instances.at(-1)!;
    socket.open();
    expect(connection.send({ tag: "UtteranceIn", text: "hi", locale: "en" })).toBe(false);
    expect(
      connection.send({ tag: "ClientHello", client_kind: "avatar", client_id: "c", locale: "en" }),
    ).toBe(true);
    const hello = decode(socket.sent[0]);
    expect(hello.session_id).toBe(NULL_SESSION_ID);
    expect(hello.seq).toBe(0);
    connection.close();
  });

  it("learns the session id from server envelopes and sequences outbound messages", () => {
    const { connection } = makeConnection();
    connection.connect();
    const socket = FakeSocket.instances.at(-1)!;
    socket.open();
    connection.send({ tag: "ClientHello", client_kind: "avatar", client_id: "c", locale: "en" });
    socket.receive(
      encode({
        version: 1,
        session_id: SID,
        seq: 0,
        sent_at: 1,
        payload: { tag: "ServerHello", session_id: SID },
      }),
    );
    connection.send({ tag: "UtteranceIn", text: "hi", locale: "en" });
    const second = decode(socket.sent[1]);
    expect(second.session_id).toBe(SID);
    expect(second.seq).toBe(1);
    connection.close();
  });

  it("does not send on a closed socket", () => {
    const { connection } = makeConnection();
    connection.connect();
    expect(
      connection.send({ tag: "ClientHello", client_kind: "avatar", client_id: "c", locale: "en" }),
    ).toBe(false);
    connection.close();
  });
});
