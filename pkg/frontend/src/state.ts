// Single state reducer: socket messages and key events serialize through
// here, and rendering is a pure function of the resulting ClientState.

import type {
  FramePacket,
  Mode,
  ServerMessage,
  SessionDescriptor,
} from "./protocol.js";

export type Connection = "connecting" | "open" | "ended" | "error";

export interface ClientState {
  mode: Mode;
  connection: Connection;
  session: SessionDescriptor | null;
  frame: FramePacket | null; // last authoritative frame, never extrapolated
  held: Set<string>;
  episode: number;
  episodeTicks: number[]; // completed episodes, in order
  exportPath: string | null;
  lastError: string | null;
}

export function initialState(mode: Mode): ClientState {
  return {
    mode,
    connection: "connecting",
    session: null,
    frame: null,
    held: new Set(),
    episode: 0,
    episodeTicks: [],
    exportPath: null,
    lastError: null,
  };
}

export type ClientEvent =
  | { kind: "server"; message: ServerMessage }
  | { kind: "key"; key: string; down: boolean }
  | { kind: "closed" };

export function reduce(state: ClientState, event: ClientEvent): ClientState {
  switch (event.kind) {
    case "server":
      return applyServer(state, event.message);
    case "key": {
      const held = new Set(state.held);
      if (event.down) held.add(event.key);
      else held.delete(event.key);
      return { ...state, held };
    }
    case "closed":
      return state.connection === "ended"
        ? state
        : { ...state, connection: "error" };
  }
}

function applyServer(state: ClientState, msg: ServerMessage): ClientState {
  switch (msg.type) {
    case "session":
      return { ...state, connection: "open", session: msg };
    case "frame":
      return { ...state, frame: msg, episode: msg.episode };
    case "episode_end":
      return { ...state, episodeTicks: [...state.episodeTicks, msg.ticks] };
    case "session_end":
      return { ...state, connection: "ended", exportPath: msg.export };
    case "error":
      return { ...state, connection: "error", lastError: msg.reason };
  }
}
