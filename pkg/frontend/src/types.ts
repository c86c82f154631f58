// View models as delivered by the control API. The UI holds no state of
// its own: every mutation round-trips and re-renders from these.

export interface NodeView {
  node_id: string;
  name: string;
  spec_class: string;
  internal_addr: string;
  is_master: boolean;
  external_addr: string | null;
  power: "on" | "off";
  block_id: string | null;
}

export interface BlockView {
  block_id: string;
  owner: string;
  member_nodes: string[];
  member_names: string[];
  period_start: number;
  period_end: number;
  state: "reserved" | "active" | "released";
}

export interface FleetView {
  revision: number;
  nodes: NodeView[];
  blocks: BlockView[];
}

export interface AssignedNodeView {
  name: string;
  process_cap: number | null;
}

export interface DecisionEntry {
  ts: string;
  actor: string;
  transition: string;
  detail?: string;
}

export interface ApplicationView {
  app_id: string;
  user: { username: string; contact?: string };
  job_description: string;
  requested_node_count: number;
  state: string;
  assigned_block: string | null;
  period: [number, number] | null;
  assigned_nodes: AssignedNodeView[] | null;
  decision_log: DecisionEntry[];
  version: number;
}

export interface ReviewResponse {
  application: ApplicationView;
  user_token: string | null;
}

export interface TokenResponse {
  principal_id: string;
  username: string;
  role: "admin" | "user";
  token: string;
}

export interface JobView {
  job_id: string;
  ring_id: string;
  program: string;
  n_procs: number;
  placement: string[];
  state: "Running" | "Finished" | "Failed";
  error: string | null;
  created_at: number;
  finished_at: number | null;
  owner: string | null;
  app_id: string | null;
}

export interface RankReport {
  rank: number;
  status: string;
  detail?: string;
  emits: [number, string][];
  t_start: number;
  t_end: number;
}

export interface JobResults {
  job_id: string;
  ranks: RankReport[];
}

export interface RingView {
  ring_id: string;
  block_id: string;
  owner: string;
  size: number;
  nodes: string[];
  created_at: number;
}

export interface TraceView {
  ring_id: string;
  entries: [string, string][];
}

export interface BenchPointView {
  size_bytes: number;
  bandwidth_Bps: number;
  reps: number;
  stddev: number;
  min_elapsed_s: number;
}

export interface BenchCurveView {
  scenario: string;
  points: BenchPointView[];
}

export interface BenchStatusView {
  bench_id: string;
  mode: "single" | "comparison";
  state: "Running" | "Finished" | "Failed";
  error: string | null;
  started_at: number;
  finished_at: number | null;
}

export interface BenchReportView {
  bench_id: string;
  mode: string;
  curves: BenchCurveView[];
  degradation_per_size: number[] | null;
  csv: string;
  dat: string;
}

export type Role = "admin" | "user" | "anonymous";
