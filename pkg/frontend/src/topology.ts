// Adjacency grid editor. Links are undirected: toggling a pair updates both
// neighbor lists. Loaded lists are kept verbatim so that loading a preset and
// exporting without edits reproduces the orchestrator's JSON exactly.

export class TopologyEditor {
  ids: number[] = [];
  locked = false;
  onChange: (() => void) | null = null;
  private adj = new Map<number, number[]>();

  load(ids: number[], adjacency: Record<string, number[]>): void {
    const known = new Set(ids);
    for (const [key, neighbors] of Object.entries(adjacency)) {
      const nid = Number(key);
      if (!Number.isInteger(nid) || !known.has(nid)) {
        throw new Error(`unknown node id ${key} in adjacency`);
      }
      for (const n of neighbors) {
        if (!known.has(n)) {
          throw new Error(`unknown node id ${n} in adjacency of ${key}`);
        }
        if (n === nid) {
          throw new Error(`self link on node ${nid}`);
        }
      }
    }
    this.ids = [...ids].sort((a, b) => a - b);
    this.adj = new Map();
    for (const nid of this.ids) {
      this.adj.set(nid, [...(adjacency[String(nid)] ?? [])]);
    }
  }

  /** Undirected view: a link exists if either side lists the other. */
  linked(a: number, b: number): boolean {
    return (this.adj.get(a) ?? []).includes(b) || (this.adj.get(b) ?? []).includes(a);
  }

  toggle(a: number, b: number): void {
    if (this.locked || a === b) {
      return;
    }
    if (this.linked(a, b)) {
      this.adj.set(a, (this.adj.get(a) ?? []).filter((n) => n !== b));
      this.adj.set(b, (this.adj.get(b) ?? []).filter((n) => n !== a));
    } else {
      this.insert(a, b);
      this.insert(b, a);
    }
    this.onChange?.();
  }

  private insert(at: number, neighbor: number): void {
    const list = this.adj.get(at) ?? [];
    if (!list.includes(neighbor)) {
      list.push(neighbor);
      list.sort((x, y) => x - y);
    }
    this.adj.set(at, list);
  }

  degree(id: number): number {
    const direct = this.adj.get(id) ?? [];
    const inbound = this.ids.filter((o) => o !== id && (this.adj.get(o) ?? []).includes(id));
    return new Set([...direct, ...inbound]).size;
  }

  isolated(id: number): boolean {
    return this.degree(id) === 0;
  }

  /** True when every node can reach every other over undirected links. */
  connected(): boolean {
    if (this.ids.length <= 1) {
      return true;
    }
    const seen = new Set<number>([this.ids[0]]);
    const queue = [this.ids[0]];
    while (queue.length > 0) {
      const cur = queue.shift()!;
      for (const other of this.ids) {
        if (!seen.has(other) && this.linked(cur, other)) {
          seen.add(other);
          queue.push(other);
        }
      }
    }
    return seen.size === this.ids.length;
  }

  exportAdjacency(): Record<string, number[]> {
    const out: Record<string, number[]> = {};
    for (const nid of this.ids) {
      out[String(nid)] = [...(this.adj.get(nid) ?? [])];
    }
    return out;
  }

  render(root: HTMLElement): void {
    root.innerHTML = "";
    root.classList.add("topology");

    if (this.ids.length === 0) {
      const empty = document.createElement("div");
      empty.className = "topo-empty";
      empty.textContent = "no nodes registered";
      root.appendChild(empty);
      return;
    }

    const table = document.createElement("table");
    table.className = "topo-grid";
    const head = document.createElement("tr");
    head.appendChild(document.createElement("th"));
    for (const nid of this.ids) {
      const th = document.createElement("th");
      th.textContent = String(nid);
      head.appendChild(th);
    }
    table.appendChild(head);

    for (const a of this.ids) {
      const row = document.createElement("tr");
      const label = document.createElement("th");
      label.textContent = String(a);
      label.dataset.node = String(a);
      if (this.isolated(a)) {
        label.classList.add("isolated");
        const badge = document.createElement("span");
        badge.className = "badge warn";
        badge.textContent = "isolated";
        label.appendChild(badge);
      }
      row.appendChild(label);
      for (const b of this.ids) {
        const cell = document.createElement("td");
        const btn = document.createElement("button");
        btn.dataset.a = String(a);
        btn.dataset.b = String(b);
        if (a === b) {
          btn.className = "cell self";
          btn.disabled = true;
        } else {
          btn.className = this.linked(a, b) ? "cell on" : "cell off";
          btn.disabled = this.locked;
          btn.addEventListener("click", () => {
            this.toggle(a, b);
            this.render(root);
          });
        }
        cell.appendChild(btn);
        row.appendChild(cell);
      }
      table.appendChild(row);
    }
    root.appendChild(table);

    if (!this.connected()) {
      // Allowed on purpose (that is how the eclipse demo looks), so this is
      // a warning, never a blocker.
      const warn = document.createElement("div");
      warn.className = "warn disconnected";
      warn.textContent = "warning: network is disconnected";
      root.appendChild(warn);
    }
  }
}
