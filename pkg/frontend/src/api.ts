// Plain fetch wrappers. The panel is a pure HTTP client: everything it does
// can be reproduced with curl against the same endpoints.

import type {
  ExperimentSpec,
  ExperimentView,
  RegistryNode,
  RunAggregate,
  Violation,
} from "./types.js";

export interface SubmitResult {
  ok: boolean;
  experiment_id?: number;
  violations?: Violation[];
  error?: string;
}

export interface ActionResult {
  ok: boolean;
  error?: string;
  note?: string;
}

async function getJson<T>(url: string): Promise<T> {
  const resp = await fetch(url);
  if (!resp.ok) {
    throw new Error(`GET ${url} -> ${resp.status}`);
  }
  return (await resp.json()) as T;
}

export class OrchestratorClient {
  // Default empty base: the panel is served by the orchestrator itself.
  constructor(readonly base: string = "") {}

  async nodes(): Promise<RegistryNode[]> {
    const body = await getJson<{ nodes: RegistryNode[] }>(`${this.base}/api/nodes`);
    return body.nodes;
  }

  async preset(name: string, nodeIds: number[], params: Record<string, string | number> = {}): Promise<ExperimentSpec> {
    const q = new URLSearchParams({ nodes: nodeIds.join(",") });
    for (const [k, v] of Object.entries(params)) {
      q.set(k, String(v));
    }
    const resp = await fetch(`${this.base}/api/presets/${name}?${q}`);
    const body = await resp.json();
    if (!resp.ok) {
      throw new Error(body.error || `preset ${name} -> ${resp.status}`);
    }
    return body as ExperimentSpec;
  }

  /** POST the spec; 400 with violations comes back as a normal result. */
  async submit(spec: ExperimentSpec): Promise<SubmitResult> {
    const resp = await fetch(`${this.base}/api/experiments`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(spec),
    });
    return (await resp.json()) as SubmitResult;
  }

  async start(experimentId: number): Promise<ActionResult> {
    const resp = await fetch(`${this.base}/api/experiments/${experimentId}/start`, { method: "POST" });
    return (await resp.json()) as ActionResult;
  }

  async stop(experimentId: number): Promise<ActionResult> {
    const resp = await fetch(`${this.base}/api/experiments/${experimentId}/stop`, { method: "POST" });
    return (await resp.json()) as ActionResult;
  }

  async runs(experimentId: number): Promise<ExperimentView> {
    return getJson<ExperimentView>(`${this.base}/api/experiments/${experimentId}/runs`);
  }

  async runMetrics(runId: string): Promise<RunAggregate> {
    return getJson<RunAggregate>(`${this.base}/api/runs/${runId}/metrics`);
  }

  logUrl(runId: string, nodeId: number): string {
    return `${this.base}/api/runs/${runId}/logs/${nodeId}`;
  }
}

let rpcSeq = 0;

/** JSON-RPC 2.0 call straight to one node's RPC listener. */
export async function nodeRpc<T>(rpcAddress: string, method: string, params?: unknown): Promise<T> {
  rpcSeq += 1;
  const req: Record<string, unknown> = { jsonrpc: "2.0", id: rpcSeq, method };
  if (params !== undefined) {
    req.params = params;
  }
  const resp = await fetch(`${rpcAddress}/rpc`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(req),
  });
  const body = await resp.json();
  if (body.error) {
    throw new Error(`${method}: ${body.error.message} (${body.error.code})`);
  }
  return body.result as T;
}
