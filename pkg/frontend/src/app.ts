// Page wiring: registry discovery, one card per node polled over JSON-RPC,
// topology editor and run controls against the orchestrator API.

import { nodeRpc, OrchestratorClient } from "./api.js";
import { renderChainView, type ColorMap } from "./chain_view.js";
import { renderInfoPanel } from "./info_panel.js";
import { RunControls } from "./controls.js";
import { TopologyEditor } from "./topology.js";
import type { ChainView, NodeInfo, RegistryNode, RunMetrics } from "./types.js";

const CHAIN_POLL_MS = 500; // 2 Hz per node while the page is open
const REGISTRY_POLL_MS = 1000;
const RUNS_POLL_MS = 1000;
const STALE_AFTER_MS = 3000;
const PRESETS = ["fully-connected", "ring", "star", "two-islands", "eclipse", "majority-51"];

interface NodeCard {
  entry: RegistryNode;
  root: HTMLElement;
  info: NodeInfo | null;
  lastOkMs: number;
}

const client = new OrchestratorClient();
const cards = new Map<number, NodeCard>();
const colors: ColorMap = {};

const grid = document.querySelector<HTMLElement>("#nodes-grid")!;
const orchStatus = document.querySelector<HTMLElement>("#orch-status")!;
const editor = new TopologyEditor();
const topoRoot = document.querySelector<HTMLElement>("#topology")!;
const controls = new RunControls(document.querySelector<HTMLElement>("#run-controls")!, client, editor);

editor.onChange = () => editor.render(topoRoot);

function cardFor(entry: RegistryNode): NodeCard {
  let card = cards.get(entry.node_id);
  if (card) {
    card.entry = entry;
    return card;
  }
  const root = document.createElement("div");
  root.className = "node-card";
  root.dataset.node = String(entry.node_id);
  root.innerHTML = `
    <div class="card-head">
      <span class="card-title">node ${entry.node_id}</span>
      <span class="reach"></span>
      <span class="stale-flag" hidden>stale</span>
    </div>
    <div class="card-info"></div>
    <div class="card-chain"></div>
  `;
  grid.appendChild(root);
  card = { entry, root, info: null, lastOkMs: 0 };
  cards.set(entry.node_id, card);
  pollNode(card);
  return card;
}

async function refreshRegistry(): Promise<void> {
  let nodes: RegistryNode[];
  try {
    nodes = await client.nodes();
    orchStatus.textContent = `${nodes.length} node(s) registered`;
    orchStatus.classList.remove("error");
  } catch (err) {
    orchStatus.textContent = `orchestrator unreachable: ${err}`;
    orchStatus.classList.add("error");
    return;
  }
  const ids = nodes.map((n) => n.node_id);
  for (const entry of nodes) {
    const card = cardFor(entry);
    const reach = card.root.querySelector<HTMLElement>(".reach")!;
    reach.textContent = entry.reachable ? "up" : `silent ${entry.last_seen_s}s`;
    reach.className = `reach ${entry.reachable ? "up" : "down"}`;
  }
  for (const [nid, card] of cards) {
    if (!ids.includes(nid)) {
      card.root.remove();
      cards.delete(nid);
    }
  }
  if (!controls.locked) {
    controls.setNodes(ids);
    if (editor.ids.join(",") !== [...ids].sort((a, b) => a - b).join(",")) {
      // Node set changed while idle: start from a fully connected draft.
      const adjacency: Record<string, number[]> = {};
      const sorted = [...ids].sort((a, b) => a - b);
      for (const nid of sorted) {
        adjacency[String(nid)] = sorted.filter((o) => o !== nid);
      }
      editor.load(sorted, adjacency);
      editor.render(topoRoot);
    }
  }
}

/** Each node has its own poll loop so one dead node never blocks the rest. */
async function pollNode(card: NodeCard): Promise<void> {
  while (cards.get(card.entry.node_id) === card) {
    try {
      const addr = card.entry.rpc_address;
      const [info, view, metrics] = await Promise.all([
        nodeRpc<NodeInfo>(addr, "powlab_getNodeInfo"),
        nodeRpc<ChainView | null>(addr, "powlab_getChainView", { depth: 12 }),
        nodeRpc<RunMetrics | null>(addr, "powlab_getMetrics"),
      ]);
      card.info = info;
      card.lastOkMs = Date.now();
      colors[info.node_id] = info.color;
      renderInfoPanel(
        card.root.querySelector<HTMLElement>(".card-info")!,
        metrics,
        { node_id: info.node_id, color: info.color },
        colors,
      );
      renderChainView(card.root.querySelector<HTMLElement>(".card-chain")!, view, colors);
    } catch {
      // Leave the last rendering in place; the staleness sweep flags it.
    }
    await sleep(CHAIN_POLL_MS);
  }
}

function sweepStaleness(): void {
  const now = Date.now();
  for (const card of cards.values()) {
    const stale = card.lastOkMs === 0 || now - card.lastOkMs > STALE_AFTER_MS;
    card.root.classList.toggle("stale", stale);
    card.root.querySelector<HTMLElement>(".stale-flag")!.hidden = !stale;
  }
}

async function pollRuns(): Promise<void> {
  const id = controls.activeExperiment;
  if (id === null) {
    return;
  }
  try {
    controls.renderRuns(await client.runs(id));
  } catch {
    // Transient orchestrator hiccup; next tick retries.
  }
}

function presetButtons(): void {
  const bar = document.querySelector<HTMLElement>("#presets")!;
  for (const name of PRESETS) {
    const btn = document.createElement("button");
    btn.textContent = name;
    btn.addEventListener("click", async () => {
      const ids = [...cards.keys()];
      if (ids.length === 0) {
        controls.status("no nodes registered yet", true);
        return;
      }
      try {
        controls.loadSpec(await client.preset(name, ids));
        editor.render(topoRoot);
        controls.status(`${name} preset loaded`);
      } catch (err) {
        controls.status(String(err), true);
      }
    });
    bar.appendChild(btn);
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

presetButtons();
editor.render(topoRoot);
void refreshRegistry();
setInterval(() => void refreshRegistry(), REGISTRY_POLL_MS);
setInterval(sweepStaleness, 1000);
setInterval(() => void pollRuns(), RUNS_POLL_MS);
