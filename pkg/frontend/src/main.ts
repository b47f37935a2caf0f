// Page bootstrap: canvas + buttons, one GameClient per session.

import { GameClient } from "./client.js";
import type { SocketLike } from "./client.js";
import { renderFrame } from "./render.js";
import { summarize, summaryTable } from "./summary.js";
import type { Mode } from "./protocol.js";

const CANVAS_PX = 600;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function serverBase(): string {
  return `${location.protocol}//${location.host}`;
}

function wsUrl(): string {
  const proto = location.protocol === "https:" ? "wss:" : "ws:";
  return `${proto}//${location.host}/ws`;
}

function openSocket(): SocketLike {
  const ws = new WebSocket(wsUrl());
  const like: SocketLike = {
    send: (d) => ws.send(d),
    close: () => ws.close(),
    onopen: null,
    onmessage: null,
    onclose: null,
  };
  ws.onopen = () => like.onopen?.();
  ws.onmessage = (ev) => like.onmessage?.({ data: String(ev.data) });
  ws.onclose = () => like.onclose?.();
  return like;
}

let client: GameClient | null = null;

function start(mode: Mode): void {
  const canvas = el<HTMLCanvasElement>("arena");
  canvas.width = canvas.height = CANVAS_PX;
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("canvas 2d unavailable");
  const status = el<HTMLDivElement>("status");
  const summary = el<HTMLPreElement>("summary");
  summary.textContent = "";

  client = new GameClient({
    mode,
    connect: openSocket,
    onChange: (state) => {
      renderFrame(ctx, state, CANVAS_PX);
      status.textContent =
        `${state.mode} | ${state.connection} | ` +
        `episodes done: ${state.episodeTicks.length}`;
      if (state.connection === "ended") void showSummary();
      if (state.lastError) status.textContent += ` | ${state.lastError}`;
    },
  });
}

async function showSummary(): Promise<void> {
  if (!client) return;
  const exported = await client.fetchExport(serverBase());
  if (!exported) {
    el<HTMLPreElement>("summary").textContent = "export unavailable — retry";
    return;
  }
  el<HTMLPreElement>("summary").textContent = summaryTable(summarize(exported));
}

window.addEventListener("keydown", (e) => {
  if (client?.key(e.key, true)) e.preventDefault();
});
window.addEventListener("keyup", (e) => {
  if (client?.key(e.key, false)) e.preventDefault();
});

el<HTMLButtonElement>("start-collect").onclick = () => start("collect");
el<HTMLButtonElement>("start-play").onclick = () => start("play");
el<HTMLButtonElement>("end-session").onclick = () => client?.end();
