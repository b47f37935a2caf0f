// Keyboard capture: physical key events -> the wire names the server knows.
// Collect mode drives both cars (W/A/D and arrows); play mode arrows only.

import type { Mode } from "./protocol.js";

const KEY_NAMES: Record<string, string> = {
  w: "w",
  a: "a",
  d: "d",
  W: "w",
  A: "a",
  D: "d",
  ArrowLeft: "left",
  ArrowRight: "right",
  ArrowUp: "up",
};

const CAR1_KEYS = ["w", "a", "d"];
const CAR2_KEYS = ["left", "right", "up"];

export function wireName(eventKey: string): string | null {
  return KEY_NAMES[eventKey] ?? null;
}

export function allowedKeys(mode: Mode): string[] {
  return mode === "collect" ? [...CAR1_KEYS, ...CAR2_KEYS] : [...CAR2_KEYS];
}

/** The wire name for a key event that actually changes the held set, or
 * null when it is irrelevant: unknown key, a car-1 key in play mode, or
 * keyboard auto-repeat of an already-held key. */
export function relevantKey(
  held: ReadonlySet<string>,
  mode: Mode,
  eventKey: string,
  down: boolean,
): string | null {
  const name = wireName(eventKey);
  if (name === null || !allowedKeys(mode).includes(name)) return null;
  if (down === held.has(name)) return null;
  return name;
}
