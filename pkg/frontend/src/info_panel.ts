// Per-node summary card: head height, current leader with its color swatch,
// leader and own contribution percentages. The card background is the node's
// own color, which is how panels are told apart at a glance.

import type { RunMetrics } from "./types.js";
import { UNKNOWN_COLOR, type ColorMap } from "./chain_view.js";

const DASH = "–";

function pct(value: number): string {
  return `${value.toFixed(1)}%`;
}

export function renderInfoPanel(
  root: HTMLElement,
  metrics: RunMetrics | null,
  own: { node_id: number; color: string },
  colors: ColorMap = {},
): void {
  root.classList.add("info-panel");
  root.style.background = own.color;

  const height = metrics ? String(metrics.head_height) : DASH;
  const hasLeader = metrics !== null && metrics.leader !== null;
  const leaderColor = hasLeader ? colors[metrics!.leader!] ?? UNKNOWN_COLOR : "";
  const leaderPct = hasLeader ? pct(metrics!.leader_pct) : DASH;
  const ownPct = metrics ? pct(metrics.own_pct) : DASH;

  root.innerHTML = `
    <div class="ip-row ip-title">node ${own.node_id}</div>
    <div class="ip-row"><span class="ip-label">height</span>
      <span class="head-height">${height}</span></div>
    <div class="ip-row"><span class="ip-label">leader</span>
      <span class="swatch${hasLeader ? "" : " none"}"></span>
      <span class="leader-pct">${leaderPct}</span></div>
    <div class="ip-row"><span class="ip-label">own</span>
      <span class="own-pct">${ownPct}</span></div>
  `;

  const swatch = root.querySelector<HTMLElement>(".swatch")!;
  if (hasLeader) {
    swatch.style.background = leaderColor;
    swatch.title = `leader: node ${metrics!.leader}`;
  } else {
    swatch.title = "no blocks yet";
  }
}
