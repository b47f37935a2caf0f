// Socket wiring. Everything stateful funnels through the reducer; this
// class owns only the socket, the resend timer, and the listener hooks.

import { hello, keysMessage, parseServerMessage } from "./protocol.js";
import type { Mode, SessionExport } from "./protocol.js";
import { relevantKey } from "./keys.js";
import { initialState, reduce } from "./state.js";
import type { ClientState } from "./state.js";

/** What the client needs from a WebSocket; tests plug in a loopback. */
export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
  onclose: (() => void) | null;
}

export interface ClientOptions {
  mode: Mode;
  connect(): SocketLike;
  onChange(state: ClientState): void;
  /** injectable timer for tests; defaults to setInterval/clearInterval */
  setTimer?(fn: () => void, ms: number): unknown;
  clearTimer?(handle: unknown): void;
}

export class GameClient {
  state: ClientState;
  private socket: SocketLike;
  private timer: unknown = null;
  private readonly opts: ClientOptions;

  constructor(opts: ClientOptions) {
    this.opts = opts;
    this.state = initialState(opts.mode);
    this.socket = opts.connect();
    this.socket.onopen = () => {
      this.socket.send(JSON.stringify(hello(this.opts.mode)));
    };
    this.socket.onmessage = (ev) => this.handleServer(ev.data);
    this.socket.onclose = () => this.dispatch({ kind: "closed" });
  }

  private dispatch(event: Parameters<typeof reduce>[1]): void {
    this.state = reduce(this.state, event);
    this.opts.onChange(this.state);
  }

  private handleServer(raw: string): void {
    const message = parseServerMessage(raw);
    this.dispatch({ kind: "server", message });
    if (message.type === "session") {
      // re-send the held set at least once per server tick even when idle
      const interval = 1000 / message.tick_hz;
      const set = this.opts.setTimer ?? ((fn, ms) => setInterval(fn, ms));
      this.timer = set(() => this.sendHeld(), interval);
    }
    if (message.type === "session_end" || message.type === "error") {
      this.stopTimer();
    }
  }

  private sendHeld(): void {
    if (this.state.connection !== "open") return;
    this.socket.send(JSON.stringify(keysMessage(this.state.held)));
  }

  /** Key event from the DOM; returns true when it changed the held set. */
  key(eventKey: string, down: boolean): boolean {
    const name = relevantKey(this.state.held, this.state.mode, eventKey, down);
    if (name === null) return false;
    this.dispatch({ kind: "key", key: name, down });
    this.sendHeld(); // on every change, not just on the timer
    return true;
  }

  end(): void {
    this.socket.send(JSON.stringify({ type: "end" }));
    this.stopTimer();
  }

  private stopTimer(): void {
    if (this.timer !== null) {
      const clear = this.opts.clearTimer ?? ((h) => clearInterval(h as number));
      clear(this.timer);
      this.timer = null;
    }
  }

  async fetchExport(baseUrl: string): Promise<SessionExport | null> {
    if (!this.state.exportPath) return null;
    const res = await fetch(baseUrl + this.state.exportPath);
    if (!res.ok) return null;
    return (await res.json()) as SessionExport;
  }
}
