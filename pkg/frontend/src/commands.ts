/**
 * Outgoing command stream: strictly increasing seq, bounded rate, and a
 * visible drop counter while disconnected.
 */

import { CommandVerb, encodeCommand } from "./protocol.js";

export const MAX_COMMANDS_PER_SECOND = 30;

export type SendFn = (frame: string) => void;

export class CommandStream {
  private seq = 0;
  private windowStartMs = 0;
  private sentInWindow = 0;
  /** Latest continuous gesture queued while the rate limiter was saturated. */
  private pendingDrag: CommandVerb | null = null;
  dropped = 0;

  constructor(
    private send: SendFn | null,
    private now: () => number = () => Date.now(),
  ) {}

  get nextSeq(): number {
    return this.seq + 1;
  }

  attach(send: SendFn): void {
    this.send = send;
    this.seq = 0; // new session, new seq space
    this.sentInWindow = 0;
    this.pendingDrag = null;
  }

  detach(): void {
    this.send = null;
  }

  get connected(): boolean {
    return this.send !== null;
  }

  /**
   * Emit a discrete command (grab, press, release...). Discrete actions are
   * never rate-dropped; they just count against the window.
   */
  issue(verb: CommandVerb): boolean {
    if (!this.send) {
      this.dropped += 1;
      return false;
    }
    this.admit();
    this.seq += 1;
    this.send(encodeCommand(this.seq, verb));
    this.sentInWindow += 1;
    return true;
  }

  /**
   * Emit a continuous gesture sample (drag/tilt). When the ≤30 cmd/s budget
   * is spent the newest sample replaces any queued one — stale pointer
   * positions are worthless.
   */
  issueContinuous(verb: CommandVerb): boolean {
    if (!this.send) {
      this.dropped += 1;
      return false;
    }
    this.admit();
    if (this.sentInWindow >= MAX_COMMANDS_PER_SECOND) {
      this.pendingDrag = verb;
      return false;
    }
    this.seq += 1;
    this.send(encodeCommand(this.seq, verb));
    this.sentInWindow += 1;
    return true;
  }

  /** Called each animation frame; flushes a deferred gesture when budget allows. */
  tick(): void {
    if (!this.send || !this.pendingDrag) return;
    this.admit();
    if (this.sentInWindow < MAX_COMMANDS_PER_SECOND) {
      const verb = this.pendingDrag;
      this.pendingDrag = null;
      this.seq += 1;
      this.send(encodeCommand(this.seq, verb));
      this.sentInWindow += 1;
    }
  }

  private admit(): void {
    const now = this.now();
    if (now - this.windowStartMs >= 1000) {
      this.windowStartMs = now;
      this.sentInWindow = 0;
    }
  }
}
