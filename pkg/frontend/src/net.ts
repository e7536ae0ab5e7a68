/**
 * Session client: handshake, snapshot consumption, reconnect with backoff.
 *
 * The socket implementation is injected so the whole state machine is
 * testable without a browser or a live server.
 */

import { CommandStream } from "./commands.js";
import { SceneModel } from "./model.js";
import {
  PROTOCOL_VERSION,
  ProtocolError,
  decodeServerMessage,
  encodeHello,
} from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export type ClientState =
  | "connecting"
  | "handshaking"
  | "connected"
  | "reconnecting"
  | "failed";

export interface SessionClientOptions {
  socketFactory?: SocketFactory;
  now?: () => number;
  setTimeoutFn?: (fn: () => void, ms: number) => unknown;
  /** Backoff schedule in ms; the last entry repeats. */
  backoffMs?: number[];
  onState?: (state: ClientState, detail?: string) => void;
}

const DEFAULT_BACKOFF = [250, 500, 1000, 2000, 4000];

export class SessionClient {
  readonly model = new SceneModel();
  readonly commands: CommandStream;
  state: ClientState = "connecting";
  connId: number | null = null;

  private socket: SocketLike | null = null;
  private attempts = 0;
  private closedByUser = false;
  private readonly makeSocket: SocketFactory;
  private readonly now: () => number;
  private readonly later: (fn: () => void, ms: number) => unknown;
  private readonly backoff: number[];
  private readonly onState: (state: ClientState, detail?: string) => void;

  constructor(private url: string, opts: SessionClientOptions = {}) {
    this.makeSocket =
      opts.socketFactory ??
      ((u) => new WebSocket(u) as unknown as SocketLike);
    this.now = opts.now ?? (() => Date.now());
    this.later = opts.setTimeoutFn ?? ((fn, ms) => setTimeout(fn, ms));
    this.backoff = opts.backoffMs ?? DEFAULT_BACKOFF;
    this.onState = opts.onState ?? (() => undefined);
    this.commands = new CommandStream(null, this.now);
    this.open();
  }

  close(): void {
    this.closedByUser = true;
    this.socket?.close();
    this.commands.detach();
  }

  private setState(state: ClientState, detail?: string): void {
    this.state = state;
    this.onState(state, detail);
  }

  private open(): void {
    this.setState(this.attempts === 0 ? "connecting" : "reconnecting");
    const sock = this.makeSocket(this.url);
    this.socket = sock;
    sock.onopen = () => {
      this.setState("handshaking");
      sock.send(encodeHello());
    };
    sock.onmessage = (ev) => this.handleFrame(sock, ev.data);
    sock.onerror = () => undefined; // onclose always follows
    sock.onclose = () => this.handleClose(sock);
  }

  private handleFrame(sock: SocketLike, raw: string): void {
    let msg;
    try {
      msg = decodeServerMessage(raw);
    } catch (e) {
      if (e instanceof ProtocolError) return; // skip the frame, keep the link
      throw e;
    }
    switch (msg.type) {
      case "hello": {
        if (msg.version !== PROTOCOL_VERSION) {
          this.setState("failed", `server speaks version ${msg.version}`);
          this.closedByUser = true;
          sock.close();
          return;
        }
        this.connId = msg.conn;
        this.model.setManifest(msg.scene);
        this.model.resetStream(); // resync from the next snapshot
        this.commands.attach((frame) => sock.send(frame));
        this.attempts = 0;
        this.setState("connected");
        return;
      }
      case "snapshot":
        this.model.receiveSnapshot(msg, this.now());
        return;
      case "error":
        if (msg.code === "version_mismatch") {
          this.setState("failed", "protocol version mismatch");
          this.closedByUser = true;
          sock.close();
        }
        // rejected commands are advisory; the next snapshot is the truth
        return;
    }
  }

  private handleClose(sock: SocketLike): void {
    if (sock !== this.socket) return; // an old connection going away
    this.commands.detach();
    if (this.closedByUser || this.state === "failed") return;
    const delay =
      this.backoff[Math.min(this.attempts, this.backoff.length - 1)] ?? 1000;
    this.attempts += 1;
    this.setState("reconnecting", `retry in ${delay} ms`);
    this.later(() => {
      if (!this.closedByUser) this.open();
    }, delay);
  }
}
