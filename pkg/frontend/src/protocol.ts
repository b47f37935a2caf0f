// Wire types for the driving-service socket protocol (JSON over WebSocket).
// The server is authoritative; the client only renders what it is sent.

export const PROTOCOL_VERSION = 1;

export type Mode = "collect" | "play";

export interface Hello {
  type: "hello";
  v: number;
  mode: Mode;
}

export interface KeysMessage {
  type: "keys";
  held: string[];
}

export interface EndMessage {
  type: "end";
}

export type ClientMessage = Hello | KeysMessage | EndMessage;

export interface AgentView {
  pos: [number, number];
  heading: number;
  speed: number;
  goal: number;
  reached: boolean;
}

export interface PitView {
  enabled: boolean;
  center: [number, number];
  radius: number;
}

export interface FramePacket {
  type: "frame";
  tick: number;
  t: number;
  episode: number;
  agents: AgentView[];
  goals: [number, number][];
  pit: PitView;
  message?: string; // play mode only
}

export interface SessionDescriptor {
  type: "session";
  id: string;
  v: number;
  mode: Mode;
  tick_hz: number;
  horizon: number;
  controls: Record<string, Record<string, string>>;
}

export interface EpisodeEnd {
  type: "episode_end";
  ticks: number;
  episode: number;
}

export interface SessionEnd {
  type: "session_end";
  id: string;
  export: string;
}

export interface ProtocolError {
  type: "error";
  reason: string;
  supported: number[];
}

export type ServerMessage =
  | SessionDescriptor
  | FramePacket
  | EpisodeEnd
  | SessionEnd
  | ProtocolError;

export interface EpisodeRecord {
  seed: number;
  ticks: number;
  hidden: string | null;
  solved: boolean;
}

export interface SessionExport {
  schema: string;
  v: number;
  mode: Mode;
  seed: number;
  partial: boolean;
  ticks: number;
  episodes: EpisodeRecord[];
  input_log: string[][];
  state_hashes: string[];
  id?: string;
}

export function hello(mode: Mode): Hello {
  return { type: "hello", v: PROTOCOL_VERSION, mode };
}

export function keysMessage(held: Iterable<string>): KeysMessage {
  return { type: "keys", held: [...held].sort() };
}

export function parseServerMessage(raw: string): ServerMessage {
  const data = JSON.parse(raw);
  const kinds = ["session", "frame", "episode_end", "session_end", "error"];
  if (typeof data !== "object" || data === null || !kinds.includes(data.type)) {
    throw new Error(`unexpected server message: ${raw.slice(0, 80)}`);
  }
  return data as ServerMessage;
}
