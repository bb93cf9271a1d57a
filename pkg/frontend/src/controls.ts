// Experiment draft form, lifecycle buttons and the post-run results table.
// The draft is editable while idle; once a run starts everything locks until
// the orchestrator reports the experiment finished.

import type { OrchestratorClient } from "./api.js";
import type { ExperimentSpec, ExperimentView, NodeConfig, RunRecord, Violation } from "./types.js";
import { TopologyEditor } from "./topology.js";

const DEFAULT_COLORS = [
  "#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4",
  "#46f0f0", "#f032e6", "#bcf60c", "#fabebe", "#008080",
];

const FIELDS = ["experiment_id", "duration_s", "repetitions", "difficulty"] as const;
type FieldName = (typeof FIELDS)[number];

const NODE_FIELDS = ["worker_count", "attempts_per_sec_per_worker", "outbound_delay_ms"] as const;

export class RunControls {
  draft: Record<FieldName, number> = {
    experiment_id: 1,
    duration_s: 30,
    repetitions: 1,
    difficulty: 25000,
  };
  nodeConfigs = new Map<number, NodeConfig>();
  locked = false;
  activeExperiment: number | null = null;

  constructor(
    readonly root: HTMLElement,
    readonly client: OrchestratorClient,
    readonly editor: TopologyEditor,
  ) {
    root.classList.add("run-controls");
    root.innerHTML = `
      <div class="rc-fields">
        ${FIELDS.map(
          (f) => `<label class="rc-field" data-field="${f}">${f.replace(/_/g, " ")}
            <input name="${f}" type="number" min="0"></label>`,
        ).join("")}
      </div>
      <table class="rc-nodes">
        <thead><tr><th>node</th><th>workers</th><th>att/s</th><th>delay ms</th><th>color</th></tr></thead>
        <tbody></tbody>
      </table>
      <ul class="rc-violations"></ul>
      <div class="rc-actions">
        <button class="act-validate">validate</button>
        <button class="act-start">start</button>
        <button class="act-stop" disabled>stop</button>
      </div>
      <div class="rc-status"></div>
      <div class="rc-runs"></div>
    `;
    for (const f of FIELDS) {
      const input = this.input(f);
      input.value = String(this.draft[f]);
      input.addEventListener("change", () => {
        this.draft[f] = Number(input.value);
      });
    }
    this.button(".act-validate").addEventListener("click", () => void this.validate());
    this.button(".act-start").addEventListener("click", () => void this.start());
    this.button(".act-stop").addEventListener("click", () => void this.stop());
  }

  private input(name: string): HTMLInputElement {
    return this.root.querySelector<HTMLInputElement>(`input[name="${name}"]`)!;
  }

  private button(sel: string): HTMLButtonElement {
    return this.root.querySelector<HTMLButtonElement>(sel)!;
  }

  /** Make sure every registered node has a config row; drop unknown ones. */
  setNodes(ids: number[]): void {
    if (this.locked) {
      return;
    }
    const sorted = [...ids].sort((a, b) => a - b);
    const current = [...this.nodeConfigs.keys()].sort((a, b) => a - b);
    if (sorted.join(",") === current.join(",")) {
      // Same node set: leave the table alone so edits in progress survive
      // the registry poll.
      return;
    }
    for (const [nid] of this.nodeConfigs) {
      if (!sorted.includes(nid)) {
        this.nodeConfigs.delete(nid);
      }
    }
    sorted.forEach((nid, idx) => {
      if (!this.nodeConfigs.has(nid)) {
        this.nodeConfigs.set(nid, {
          worker_count: 1,
          attempts_per_sec_per_worker: 5000,
          outbound_delay_ms: 0,
          color: DEFAULT_COLORS[idx % DEFAULT_COLORS.length],
        });
      }
    });
    this.renderNodeTable();
  }

  /** Load a full spec (usually a preset) into the form and the editor. */
  loadSpec(spec: ExperimentSpec): void {
    if (this.locked) {
      return;
    }
    for (const f of FIELDS) {
      this.draft[f] = spec[f];
      this.input(f).value = String(spec[f]);
    }
    this.nodeConfigs = new Map();
    const ids = Object.keys(spec.nodes)
      .map(Number)
      .sort((a, b) => a - b);
    for (const nid of ids) {
      const c = spec.nodes[String(nid)];
      this.nodeConfigs.set(nid, {
        worker_count: c.worker_count,
        attempts_per_sec_per_worker: c.attempts_per_sec_per_worker,
        outbound_delay_ms: c.outbound_delay_ms,
        color: c.color,
      });
    }
    this.editor.load(ids, spec.topology.adjacency);
    this.renderNodeTable();
    this.clearViolations();
  }

  /** Serialize the draft in the exact shape and key order the API uses. */
  buildSpec(): ExperimentSpec {
    const nodes: Record<string, NodeConfig> = {};
    for (const nid of [...this.nodeConfigs.keys()].sort((a, b) => a - b)) {
      const c = this.nodeConfigs.get(nid)!;
      nodes[String(nid)] = {
        worker_count: c.worker_count,
        attempts_per_sec_per_worker: c.attempts_per_sec_per_worker,
        outbound_delay_ms: c.outbound_delay_ms,
        color: c.color,
      };
    }
    return {
      experiment_id: this.draft.experiment_id,
      duration_s: this.draft.duration_s,
      repetitions: this.draft.repetitions,
      difficulty: this.draft.difficulty,
      nodes,
      topology: { adjacency: this.editor.exportAdjacency() },
    };
  }

  renderNodeTable(): void {
    const tbody = this.root.querySelector<HTMLElement>(".rc-nodes tbody")!;
    tbody.innerHTML = "";
    for (const nid of [...this.nodeConfigs.keys()].sort((a, b) => a - b)) {
      const cfg = this.nodeConfigs.get(nid)!;
      const row = document.createElement("tr");
      row.dataset.node = String(nid);
      row.innerHTML = `
        <td class="nid">${nid}</td>
        ${NODE_FIELDS.map(
          (f) => `<td><input data-nf="${f}" type="number" min="0" value="${cfg[f]}"></td>`,
        ).join("")}
        <td><input data-nf="color" type="color" value="${cfg.color}"></td>
      `;
      for (const inp of row.querySelectorAll<HTMLInputElement>("input")) {
        inp.disabled = this.locked;
        inp.addEventListener("change", () => {
          const field = inp.dataset.nf!;
          if (field === "color") {
            cfg.color = inp.value;
          } else {
            cfg[field as (typeof NODE_FIELDS)[number]] = Number(inp.value);
          }
        });
      }
      tbody.appendChild(row);
    }
  }

  clearViolations(): void {
    this.root.querySelector(".rc-violations")!.innerHTML = "";
    for (const el of this.root.querySelectorAll(".invalid")) {
      el.classList.remove("invalid");
    }
  }

  /** List every violation and mark the field (or node row) it points at. */
  showViolations(violations: Violation[]): void {
    this.clearViolations();
    const list = this.root.querySelector<HTMLElement>(".rc-violations")!;
    for (const v of violations) {
      const li = document.createElement("li");
      li.className = "violation";
      li.dataset.field = v.field;
      li.textContent = `${v.field}: ${v.reason}`;
      list.appendChild(li);

      const top = this.root.querySelector(`.rc-field[data-field="${v.field}"]`);
      top?.classList.add("invalid");
      const m = v.field.match(/^nodes\.(\d+)/);
      if (m) {
        this.root.querySelector(`.rc-nodes tr[data-node="${m[1]}"]`)?.classList.add("invalid");
      }
    }
  }

  setLocked(locked: boolean): void {
    this.locked = locked;
    this.editor.locked = locked;
    for (const input of this.root.querySelectorAll<HTMLInputElement>(".rc-fields input, .rc-nodes input")) {
      input.disabled = locked;
    }
    this.button(".act-validate").disabled = locked;
    this.button(".act-start").disabled = locked;
    this.button(".act-stop").disabled = !locked;
  }

  status(text: string, isError = false): void {
    const el = this.root.querySelector<HTMLElement>(".rc-status")!;
    el.textContent = text;
    el.classList.toggle("error", isError);
  }

  async validate(): Promise<boolean> {
    try {
      const result = await this.client.submit(this.buildSpec());
      if (!result.ok) {
        if (result.violations) {
          this.showViolations(result.violations);
          this.status(`${result.violations.length} violation(s)`, true);
        } else {
          this.status(result.error ?? "rejected", true);
        }
        return false;
      }
      this.clearViolations();
      this.status(`spec ${result.experiment_id} accepted`);
      return true;
    } catch (err) {
      this.status(String(err), true);
      return false;
    }
  }

  async start(): Promise<void> {
    if (!(await this.validate())) {
      return;
    }
    const id = this.draft.experiment_id;
    try {
      const result = await this.client.start(id);
      if (!result.ok) {
        this.status(result.error ?? "start refused", true);
        return;
      }
      this.activeExperiment = id;
      this.setLocked(true);
      this.status(`experiment ${id} running`);
    } catch (err) {
      this.status(String(err), true);
    }
  }

  async stop(): Promise<void> {
    if (this.activeExperiment === null) {
      return;
    }
    try {
      await this.client.stop(this.activeExperiment);
      this.status(`stop requested for ${this.activeExperiment}`);
    } catch (err) {
      this.status(String(err), true);
    }
  }

  /** Progress plus one row per run; links go straight to the log endpoints. */
  renderRuns(view: ExperimentView): void {
    const box = this.root.querySelector<HTMLElement>(".rc-runs")!;
    const finished = view.status === "complete" || view.status === "aborted";
    if (finished && this.locked) {
      this.setLocked(false);
      this.activeExperiment = null;
      this.status(`experiment ${view.experiment_id} ${view.status}`);
    }

    const rows = view.runs
      .map((run) => {
        const agg = run.aggregate;
        const logs = Object.keys(run.logs ?? {})
          .map((nid) => `<a href="${this.client.logUrl(run.run_id, Number(nid))}" target="_blank">${nid}</a>`)
          .join(" ");
        return `<tr class="run ${run.status}">
          <td>${run.run_id}</td><td>${run.status}</td>
          <td>${agg ? agg.head_height : "–"}</td>
          <td>${agg ? agg.total_canonical : "–"}</td>
          <td>${agg ? agg.leader_pct.toFixed(1) + "%" : "–"}</td>
          <td>${agg ? agg.uncle_rate.toFixed(3) : "–"}</td>
          <td>${agg ? (agg.converged ? "yes" : "no") : "–"}</td>
          <td class="logs">${logs}</td>
        </tr>`;
      })
      .join("");
    const progress = this.progressLine(view);
    box.innerHTML = `
      <div class="rc-progress">${progress}</div>
      <table class="rc-results">
        <thead><tr><th>run</th><th>status</th><th>head</th><th>canonical</th>
          <th>leader</th><th>uncle rate</th><th>converged</th><th>logs</th></tr></thead>
        <tbody>${rows}</tbody>
      </table>
    `;
  }

  private progressLine(view: ExperimentView): string {
    const total = view.spec.repetitions;
    if (view.status === "running") {
      const current = view.runs.find((r: RunRecord) => r.status === "running");
      const done = view.runs.filter((r: RunRecord) => r.status === "complete").length;
      let timing = "";
      if (current?.started_at_ms) {
        const elapsed = Math.max(0, Math.round((Date.now() - current.started_at_ms) / 1000));
        const remaining = Math.max(0, view.spec.duration_s - elapsed);
        timing = ` · ${elapsed}s elapsed, ~${remaining}s left`;
      }
      return `run ${Math.min(done + 1, total)}/${total}${timing}`;
    }
    return `${view.status} · ${view.runs.length}/${total} runs`;
  }
}
