// Canvas 2D scene: arena square, dashed pit circle, goal stars, agent
// arrowheads, message line. Pure function of ClientState — no animation
// state of its own, so a stale frame just redraws identically.

import type { ClientState } from "./state.js";
import type { FramePacket } from "./protocol.js";

/** The subset of CanvasRenderingContext2D the renderer uses; tests pass a
 * recording stub instead of a real canvas. */
export interface Surface {
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  save(): void;
  restore(): void;
  translate(x: number, y: number): void;
  rotate(angle: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  closePath(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  setLineDash(segments: number[]): void;
  stroke(): void;
  fill(): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  clearRect(x: number, y: number, w: number, h: number): void;
  fillText(text: string, x: number, y: number): void;
}

const COLORS = ["#d9534f", "#428bca"]; // car 1 red, car 2 blue
const GOAL_IDLE = "#bbbbbb";
const ARROW_LEN = 0.5; // world units

/** Arena half-width inferred from the goal ring (the packet carries world
 * coordinates only); 25% margin keeps the stars off the border. */
export function worldHalf(frame: FramePacket): number {
  let extent = 0;
  for (const [x, y] of frame.goals) {
    extent = Math.max(extent, Math.abs(x), Math.abs(y));
  }
  return extent > 0 ? extent * 1.25 : 5;
}

export function renderFrame(
  ctx: Surface,
  state: ClientState,
  sizePx: number,
): void {
  ctx.clearRect(0, 0, sizePx, sizePx);
  const frame = state.frame;
  if (!frame) {
    ctx.fillStyle = "#666666";
    ctx.font = "16px sans-serif";
    ctx.fillText(`${state.connection}...`, 12, 24);
    return;
  }

  const half = worldHalf(frame);
  const scale = sizePx / (2 * half);
  const px = (x: number) => sizePx / 2 + x * scale;
  const py = (y: number) => sizePx / 2 - y * scale; // world y is up

  // arena border
  ctx.strokeStyle = "#333333";
  ctx.lineWidth = 2;
  ctx.setLineDash([]);
  ctx.strokeRect(0, 0, sizePx, sizePx);

  if (frame.pit.enabled) {
    ctx.strokeStyle = "#aa6600";
    ctx.lineWidth = 1.5;
    ctx.setLineDash([6, 4]);
    ctx.beginPath();
    ctx.arc(
      px(frame.pit.center[0]),
      py(frame.pit.center[1]),
      frame.pit.radius * scale,
      0,
      2 * Math.PI,
    );
    ctx.stroke();
    ctx.setLineDash([]);
  }

  const activeGoals = new Map<number, number>(); // slot -> agent index
  frame.agents.forEach((a, i) => activeGoals.set(a.goal, i));
  frame.goals.forEach(([x, y], slot) => {
    const owner = activeGoals.get(slot);
    ctx.fillStyle = owner === undefined ? GOAL_IDLE : COLORS[owner % 2];
    drawStar(ctx, px(x), py(y), 0.35 * scale);
  });

  frame.agents.forEach((agent, i) => {
    ctx.save();
    ctx.translate(px(agent.pos[0]), py(agent.pos[1]));
    ctx.rotate(-agent.heading); // canvas y-flip negates angles
    ctx.fillStyle = COLORS[i % 2];
    ctx.beginPath();
    ctx.moveTo(ARROW_LEN * scale, 0);
    ctx.lineTo(-0.3 * ARROW_LEN * scale, 0.35 * ARROW_LEN * scale);
    ctx.lineTo(-0.3 * ARROW_LEN * scale, -0.35 * ARROW_LEN * scale);
    ctx.closePath();
    ctx.fill();
    if (agent.reached) {
      ctx.strokeStyle = COLORS[i % 2];
      ctx.lineWidth = 1;
      ctx.beginPath();
      ctx.arc(0, 0, 0.7 * ARROW_LEN * scale, 0, 2 * Math.PI);
      ctx.stroke();
    }
    ctx.restore();
  });

  // play mode: instruction string at the top-left
  if (frame.message !== undefined) {
    ctx.fillStyle = "#111111";
    ctx.font = "bold 18px sans-serif";
    ctx.fillText(frame.message, 12, 26);
  }
  ctx.fillStyle = "#666666";
  ctx.font = "12px sans-serif";
  ctx.fillText(`episode ${frame.episode}  t=${frame.t}`, 12, sizePx - 10);
}

function drawStar(ctx: Surface, cx: number, cy: number, r: number): void {
  ctx.beginPath();
  for (let i = 0; i < 10; i++) {
    const radius = i % 2 === 0 ? r : 0.45 * r;
    const angle = (Math.PI / 5) * i - Math.PI / 2;
    const x = cx + radius * Math.cos(angle);
    const y = cy + radius * Math.sin(angle);
    if (i === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  }
  ctx.closePath();
  ctx.fill();
}
