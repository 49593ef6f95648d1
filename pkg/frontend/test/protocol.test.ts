import { describe, expect, it } from "vitest";

import {
  NULL_SESSION_ID,
  ProtocolError,
  canonicalJson,
  decode,
  encode,
  makeEnvelope,
  type Envelope,
} from "../src/protocol.js";
import stream from "./fixtures/stream-50.json";

const SID = "0".repeat(31) + "7";

function envelope(payload: Envelope["payload"], sessionId = SID, seq = 0): Envelope {
  return { version: 1, session_id: sessionId, seq, sent_at: 123, payload };
}

describe("canonicalJson", () => {
  it("sorts keys recursively and uses compact separators", () => {
    const text = canonicalJson({ b: 1, a: { d: 2, c: [3, { f: 4, e: 5 }] } });
    expect(text).toBe('{"a":{"c":[3,{"e":5,"f":4}],"d":2},"b":1}');
  });
});

describe("encode/decode", () => {
  it("roundtrips an utterance envelope", () => {
    const env = envelope({ tag: "UtteranceIn", text: "hola señor 💬", locale: "es" });
    expect(decode(encode(env))).toEqual(env);
  });

  it("re-encodes every recorded server message byte-identically", () => {
    // the fixture was produced by the server's canonical encoder, so the
    // client codec must agree with it exactly
    for (const line of stream as string[]) {
      expect(encode(decode(line))).toBe(line);
    }
  });

  it("rejects unknown payload tags", () => {
    const raw = encode(envelope({ tag: "SessionClose", reason: "x" })).replace(
      "SessionClose",
      "Bogus",
    );
    expect(() => decode(raw)).toThrow(ProtocolError);
  });

  it("rejects wrong version", () => {
    const raw = encode(envelope({ tag: "SessionClose", reason: "x" })).replace(
      '"version":1',
      '"version":2',
    );
    expect(() => decode(raw)).toThrow(/version/);
  });

  it("rejects non-JSON and truncated input", () => {
    expect(() => decode("not json")).toThrow(ProtocolError);
    const raw = encode(envelope({ tag: "SessionClose", reason: "x" }));
    expect(() => decode(raw.slice(0, raw.length / 2))).toThrow(ProtocolError);
  });

  it("reserves the all-zero session for ClientHello", () => {
    const hello = envelope(
      { tag: "ClientHello", client_kind: "avatar", client_id: "c", locale: "en" },
      NULL_SESSION_ID,
    );
    expect(decode(encode(hello)).payload.tag).toBe("ClientHello");
    expect(() =>
      encode(envelope({ tag: "SessionClose", reason: "x" }, NULL_SESSION_ID)),
    ).toThrow(/reserved/);
  });

  it("rejects envelopes with missing or extra keys", () => {
    const obj = JSON.parse(encode(envelope({ tag: "SessionClose", reason: "x" })));
    delete obj.seq;
    expect(() => decode(JSON.stringify(obj))).toThrow(ProtocolError);
    obj.seq = 0;
    obj.extra = true;
    expect(() => decode(JSON.stringify(obj))).toThrow(ProtocolError);
  });
});

describe("makeEnvelope", () => {
  it("fills version and timestamp", () => {
    const env = makeEnvelope(SID, 4, { tag: "SessionClose", reason: "done" });
    expect(env.version).toBe(1);
    expect(env.seq).toBe(4);
    expect(env.sent_at).toBeGreaterThan(0);
  });
});
