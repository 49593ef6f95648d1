/**
 * WebSocket link to the branch service with exponential-backoff reconnect
 * (base 1 s, cap 30 s). Malformed server messages are logged and dropped;
 * the connection stays up. Sequence numbers are per connection in both
 * directions.
 */

import type { Envelope, Payload } from "./protocol.js";
import { NULL_SESSION_ID, ProtocolError, decode, encode, makeEnvelope } from "./protocol.js";

export const RECONNECT_BASE_MS = 1000;
export const RECONNECT_CAP_MS = 30000;

// WebSocket.OPEN, spelled out so non-browser test environments work too
const SOCKET_OPEN = 1;

export function reconnectDelayMs(attempt: number): number {
  const bounded = Math.max(0, attempt);
  return Math.min(RECONNECT_BASE_MS * 2 ** bounded, RECONNECT_CAP_MS);
}

export interface ConnectionEvents {
  onEnvelope: (envelope: Envelope) => void;
  onOpen: () => void;
  onDown: (retryInMs: number) => void;
  onProtocolError?: (error: ProtocolError) => void;
}

type SocketFactory = (url: string) => WebSocket;

export class BranchConnection {
  sessionId: string = NULL_SESSION_ID;
  private socket: WebSocket | null = null;
  private seq = 0;
  private lastSeqIn: number | null = null;
  private attempt = 0;
  private stopped = false;
  private retryTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private url: string,
    private events: ConnectionEvents,
    private socketFactory: SocketFactory = (u) => new WebSocket(u),
  ) {}

  connect(): void {
    this.stopped = false;
    this.open();
  }

  private open(): void {
    const socket = this.socketFactory(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.attempt = 0;
      this.seq = 0;
      this.lastSeqIn = null;
      this.events.onOpen();
    };
    socket.onmessage = (event: MessageEvent) => {
      let envelope: Envelope;
      try {
        envelope = decode(String(event.data));
      } catch (err) {
        if (err instanceof ProtocolError) {
          console.warn("dropping malformed server message:", err.message);
          this.events.onProtocolError?.(err);
          return; // keep the connection
        }
        throw err;
      }
      if (this.lastSeqIn !== null && envelope.seq !== this.lastSeqIn + 1) {
        console.warn(`server seq jumped ${this.lastSeqIn} -> ${envelope.seq}`);
      }
      this.lastSeqIn = envelope.seq;
      if (envelope.session_id !== NULL_SESSION_ID) {
        this.sessionId = envelope.session_id;
      }
      this.events.onEnvelope(envelope);
    };
    socket.onclose = () => this.scheduleRetry();
    socket.onerror = () => {
      /* the close handler owns the retry */
    };
  }

  private scheduleRetry(): void {
    this.socket = null;
    if (this.stopped) return;
    const delay = reconnectDelayMs(this.attempt);
    this.attempt += 1;
    this.events.onDown(delay);
    this.retryTimer = setTimeout(() => this.open(), delay);
  }

  get isOpen(): boolean {
    return this.socket !== null && this.socket.readyState === SOCKET_OPEN;
  }

  send(payload: Payload): boolean {
    if (!this.socket || this.socket.readyState !== SOCKET_OPEN) {
      return false;
    }
    const sessionId = payload.tag === "ClientHello" ? NULL_SESSION_ID : this.sessionId;
    if (sessionId === NULL_SESSION_ID && payload.tag !== "ClientHello") {
      return false; // nothing but hello may go out before the server assigns an id
    }
    this.socket.send(encode(makeEnvelope(sessionId, this.seq, payload)));
    this.seq += 1;
    return true;
  }

  close(): void {
    this.stopped = true;
    if (this.retryTimer !== null) clearTimeout(this.retryTimer);
    this.socket?.close();
    this.socket = null;
  }
}
