import { describe, expect, it } from "vitest";

import { renderFrame, worldHalf } from "./render.js";
import type { Surface } from "./render.js";
import { initialState, reduce } from "./state.js";
import { makeFrame } from "./testutil.js";

/** Records every drawing call; property writes are captured too. */
function recorder(): Surface & { log: string[] } {
  const log: string[] = [];
  const fmt = (v: unknown) =>
    typeof v === "number" ? v.toFixed(4) : JSON.stringify(v);
  const target = {
    log,
    fillStyle: "",
    strokeStyle: "",
    lineWidth: 0,
    font: "",
  } as Surface & { log: string[] };
  const methods = [
    "save", "restore", "translate", "rotate", "beginPath", "moveTo",
    "lineTo", "closePath", "arc", "setLineDash", "stroke", "fill",
    "fillRect", "strokeRect", "clearRect", "fillText",
  ] as const;
  for (const name of methods) {
    (target as unknown as Record<string, unknown>)[name] = (
      ...args: unknown[]
    ) => {
      log.push(`${name}(${args.map(fmt).join(",")})`);
    };
  }
  return target;
}

function stateWithFrame(frame = makeFrame()) {
  return reduce(initialState("play"), { kind: "server", message: frame });
}

describe("renderFrame", () => {
  it("is a pure function of the client state", () => {
    const state = stateWithFrame();
    const a = recorder();
    const b = recorder();
    renderFrame(a, state, 600);
    renderFrame(b, state, 600);
    expect(a.log).toEqual(b.log);
    expect(a.log.length).toBeGreaterThan(10);
  });

  it("draws no pit circle when the pit is disabled", () => {
    const off = recorder();
    renderFrame(off, stateWithFrame(), 600);
    expect(off.log.filter((l) => l.startsWith("setLineDash([6,4]"))).toEqual([]);

    const on = recorder();
    const frame = makeFrame({
      pit: { enabled: true, center: [1, 1], radius: 1.5 },
    });
    renderFrame(on, stateWithFrame(frame), 600);
    expect(on.log.some((l) => l.startsWith("setLineDash([6,4]"))).toBe(true);
    expect(on.log.length).toBeGreaterThan(off.log.length);
  });

  it("rotates each arrowhead by exactly the packet heading", () => {
    const ctx = recorder();
    const frame = makeFrame();
    renderFrame(ctx, stateWithFrame(frame), 600);
    const rotations = ctx.log.filter((l) => l.startsWith("rotate("));
    // canvas y points down, so world headings are negated
    expect(rotations).toEqual([
      `rotate(${(-frame.agents[0].heading).toFixed(4)})`,
      `rotate(${(-frame.agents[1].heading).toFixed(4)})`,
    ]);
  });

  it("draws the message top-left in play mode only", () => {
    const withMsg = recorder();
    renderFrame(withMsg, stateWithFrame(makeFrame({ message: "Accelerate" })), 600);
    expect(withMsg.log).toContain('fillText("Accelerate",12.0000,26.0000)');

    const collect = recorder();
    renderFrame(collect, stateWithFrame(makeFrame()), 600);
    expect(collect.log.some((l) => l.includes("Accelerate"))).toBe(false);
  });

  it("draws one star per goal slot and one arrowhead per agent", () => {
    const ctx = recorder();
    renderFrame(ctx, stateWithFrame(), 600);
    // star = closePath+fill per slot; arrowheads add closePath+fill each too
    const fills = ctx.log.filter((l) => l === "fill()").length;
    expect(fills).toBe(8 + 2);
  });

  it("stays on-screen for any world scale", () => {
    expect(worldHalf(makeFrame())).toBeCloseTo(5, 5); // 4 * 1.25
    const tiny = makeFrame({ goals: [[0, 0]] });
    expect(worldHalf(tiny)).toBe(5); // fallback
  });

  it("renders a status line before the first frame arrives", () => {
    const ctx = recorder();
    renderFrame(ctx, initialState("play"), 600);
    expect(ctx.log.some((l) => l.includes("connecting"))).toBe(true);
  });
});
