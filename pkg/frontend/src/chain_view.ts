// Fork graph rendering. One column per height; the canonical block sits on
// the main row and side blocks hang below the column of their own height,
// branching off the previous column where their shared parent lives.

import type { BlockSummary, ChainView } from "./types.js";

export const UNKNOWN_COLOR = "#9e9e9e";

export type ColorMap = Record<number | string, string>;

function blockEl(summary: BlockSummary, kind: "genesis" | "canonical" | "side", colors: ColorMap): HTMLElement {
  const el = document.createElement("div");
  el.className = `block ${kind}`;
  el.dataset.height = String(summary.height);
  el.dataset.miner = String(summary.miner_id);
  el.dataset.hash = summary.hash;
  el.textContent = String(summary.height);
  el.title = `#${summary.height} miner ${summary.miner_id}\n${summary.hash.slice(0, 16)}`;

  if (kind === "genesis") {
    return el;
  }
  const color = colors[summary.miner_id];
  if (color) {
    el.style.background = color;
  } else {
    // No color registered for this miner: paint it neutral and flag it.
    el.style.background = UNKNOWN_COLOR;
    el.classList.add("unknown");
    const badge = document.createElement("span");
    badge.className = "badge warn";
    badge.textContent = "?";
    badge.title = `no color known for miner ${summary.miner_id}`;
    el.appendChild(badge);
  }
  return el;
}

/**
 * Replace `root`'s content with the rendered view. A null or empty view
 * (node not configured yet, or nothing mined) shows a lone genesis
 * placeholder so the panel never looks broken.
 */
export function renderChainView(root: HTMLElement, view: ChainView | null, colors: ColorMap = {}): void {
  root.innerHTML = "";
  root.classList.add("chain-view");

  if (!view || view.window.length === 0) {
    const col = document.createElement("div");
    col.className = "chain-col";
    const g = document.createElement("div");
    g.className = "block genesis placeholder";
    g.textContent = "0";
    g.title = "genesis";
    col.appendChild(g);
    root.appendChild(col);
    return;
  }

  for (const entry of view.window) {
    const col = document.createElement("div");
    col.className = "chain-col";
    col.dataset.height = String(entry.height);
    const kind = entry.height === 0 ? "genesis" : "canonical";
    col.appendChild(blockEl(entry.canonical, kind, colors));
    for (const side of entry.side) {
      col.appendChild(blockEl(side, "side", colors));
    }
    root.appendChild(col);
  }
}
