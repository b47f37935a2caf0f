// Shared fixtures for the unit tests.

import type { FramePacket, SessionDescriptor } from "./protocol.js";

export function makeFrame(overrides: Partial<FramePacket> = {}): FramePacket {
  return {
    type: "frame",
    tick: 1,
    t: 1,
    episode: 0,
    agents: [
      { pos: [1.0, 2.0], heading: 0.5, speed: 0.2, goal: 0, reached: false },
      { pos: [-1.0, -2.0], heading: -1.2, speed: 0.3, goal: 3, reached: false },
    ],
    goals: Array.from({ length: 8 }, (_, i) => {
      const a = (2 * Math.PI * i) / 8;
      return [4 * Math.cos(a), 4 * Math.sin(a)] as [number, number];
    }),
    pit: { enabled: false, center: [0, 0], radius: 1.5 },
    ...overrides,
  };
}

export function makeSession(
  overrides: Partial<SessionDescriptor> = {},
): SessionDescriptor {
  return {
    type: "session",
    id: "abc123",
    v: 1,
    mode: "play",
    tick_hz: 10,
    horizon: 200,
    controls: {
      car1: { a: "Turn Anti-Clockwise", d: "Turn Clockwise", w: "Accelerate" },
      car2: { left: "Turn Anti-Clockwise", right: "Turn Clockwise", up: "Accelerate" },
    },
    ...overrides,
  };
}
