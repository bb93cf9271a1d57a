// JSON shapes as served by the orchestrator REST API and the node JSON-RPC.
// Field names mirror the wire format exactly, snake_case included.

export interface BlockSummary {
  hash: string;
  miner_id: number;
  timestamp_ms: number;
  height: number;
}

export interface ChainViewEntry {
  height: number;
  canonical: BlockSummary;
  side: BlockSummary[];
}

export interface ChainView {
  head_height: number;
  window: ChainViewEntry[];
}

export interface RunMetrics {
  total_canonical: number;
  contributions: Record<string, number>;
  leader: number | null;
  leader_pct: number;
  own_pct: number;
  uncle_count: number;
  uncle_rate: number;
  head_height: number;
}

/** Aggregate served per run; RunMetrics plus runner-level fields. */
export interface RunAggregate extends RunMetrics {
  reference_node: number;
  converged: boolean;
  convergence_time_s: number | null;
}

export interface NodeInfo {
  node_id: number;
  api_version: number;
  color: string;
  phase: string;
  peer_count: number;
  experiment_id: number | null;
  head_height: number;
  run_id: string | null;
}

export interface RegistryNode {
  node_id: number;
  p2p_address: string;
  rpc_address: string;
  reachable: boolean;
  last_seen_s: number;
}

export interface NodeConfig {
  worker_count: number;
  attempts_per_sec_per_worker: number;
  outbound_delay_ms: number;
  color: string;
}

export interface ExperimentSpec {
  experiment_id: number;
  duration_s: number;
  repetitions: number;
  difficulty: number;
  nodes: Record<string, NodeConfig>;
  topology: { adjacency: Record<string, number[]> };
}

export interface Violation {
  field: string;
  reason: string;
}

export interface AgreementSample {
  t_ms: number;
  agreement: number;
  heads: number;
}

export interface RunRecord {
  experiment_id: number;
  derived_experiment_id: number;
  repetition_index: number;
  run_id: string;
  status: string;
  started_at_ms: number | null;
  ended_at_ms: number | null;
  nodes: number[];
  incomplete_nodes: number[];
  agreement_timeline: AgreementSample[];
  logs: Record<string, string>;
  aggregate: RunAggregate | null;
  error: string | null;
}

export interface ExperimentView {
  experiment_id: number;
  status: string;
  spec: ExperimentSpec;
  runs: RunRecord[];
}
