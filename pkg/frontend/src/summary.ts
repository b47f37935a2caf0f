// Post-session summary: episodes grouped by the (now revealed) hidden
// agent, with mean episode length and solve rate per group.

import type { SessionExport } from "./protocol.js";

export interface SummaryRow {
  hidden: string; // "human" for collect-mode sessions (no hidden agent)
  episodes: number;
  meanTicks: number;
  solved: number;
}

export function summarize(exported: SessionExport): SummaryRow[] {
  const groups = new Map<string, { ticks: number[]; solved: number }>();
  for (const ep of exported.episodes) {
    const key = ep.hidden ?? "human";
    let g = groups.get(key);
    if (!g) {
      g = { ticks: [], solved: 0 };
      groups.set(key, g);
    }
    g.ticks.push(ep.ticks);
    if (ep.solved) g.solved += 1;
  }
  return [...groups.entries()]
    .map(([hidden, g]) => ({
      hidden,
      episodes: g.ticks.length,
      meanTicks: g.ticks.reduce((a, b) => a + b, 0) / g.ticks.length,
      solved: g.solved,
    }))
    .sort((a, b) => a.hidden.localeCompare(b.hidden));
}

export function summaryTable(rows: SummaryRow[]): string {
  if (rows.length === 0) return "no completed episodes";
  const lines = ["hidden agent | episodes | mean ticks | solved"];
  for (const r of rows) {
    lines.push(
      `${r.hidden} | ${r.episodes} | ${r.meanTicks.toFixed(1)} | ${r.solved}`,
    );
  }
  return lines.join("\n");
}
