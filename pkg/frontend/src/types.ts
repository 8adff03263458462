/** Wire-format mirrors of the gateway's JSON payloads.
 *
 * Every interface here reflects a response body (or SSE frame body) exactly as
 * the gateway serializes it. The console never derives new numeric fields from
 * these; it displays what arrived.
 */

// ---------------------------------------------------------------------------
// Sessions and jobs
// ---------------------------------------------------------------------------

export interface JobInfo {
  job_id: string;
  query: string;
  status: string;
  submitted_ms: number;
  finished_ms: number | null;
  error: string;
}

export interface SessionDescription {
  session_id: string;
  topology: string;
  node_count: number;
  link_count: number;
  demand_count: number;
  alarm_count: number;
  state_digest: string;
  busy: boolean;
  next_seq: number;
  jobs: JobInfo[];
}

export interface SessionList {
  sessions: SessionDescription[];
}

export interface SubmitReply {
  job_id: string;
  session_id: string;
  status: string;
}

export interface IngestReply {
  session_id: string;
  accepted: number;
  errors: string[];
  alarm_count: number;
}

// ---------------------------------------------------------------------------
// Agent transcript records and the SSE stream that carries them
// ---------------------------------------------------------------------------

/** One transcript row: the five-step pipeline emits these in seq order. */
export interface StepRecord {
  job_id: string;
  seq: number;
  ts: number;
  step: string;
  payload: Record<string, unknown>;
}

export interface StepEvent {
  event: "step";
  job_id: string;
  data: StepRecord;
}

export interface TerminalEvent {
  event: "final" | "failed";
  job_id: string;
  status: string;
  error: string;
}

export type StreamEvent = StepEvent | TerminalEvent;

export function isStepEvent(ev: StreamEvent): ev is StepEvent {
  return ev.event === "step";
}

export interface TranscriptReply {
  session_id: string;
  job_id: string;
  status: string;
  query: string;
  error: string;
  records: StepRecord[];
}

// ---------------------------------------------------------------------------
// Alarm triage payloads (carried inside PROBLEM_SOLVING / FINAL_ANSWER records)
// ---------------------------------------------------------------------------

export interface CompressedEventRow {
  alarm_type: string;
  source_ne: string;
  key: string;
  count: number;
  max_severity: string;
  first_ts: number;
  last_ts: number;
  representative_description: string;
}

export interface RankingEntry {
  event: CompressedEventRow;
  severity_term: number;
  frequency_term: number;
  correlation_term: number;
  score: number;
}

export interface SuggestionRow {
  event_key: string;
  cause: string;
  actions: string[];
  source_refs: string[];
}

export interface AnswerSection {
  kind: string;
  answer_text: string;
  payload: Record<string, unknown>;
}

export interface FinalAnswer {
  text: string;
  sections: AnswerSection[];
  transcript_ref: string;
}

// ---------------------------------------------------------------------------
// Network state, allocation, and per-channel QoT reports
// ---------------------------------------------------------------------------

export interface DemandRow {
  id: string;
  src: string;
  dst: string;
  launch_power_dbm: number;
  modulation: string;
}

export interface DemandAllocationRow {
  demand_id: string;
  blocked: boolean;
  route_nodes: string[];
  link_ids: string[];
  channel: number | null;
}

export interface AllocationSummary {
  blocking_probability: number;
  utilization: number;
}

export interface NetworkState {
  session_id: string;
  topology: string;
  node_count: number;
  link_count: number;
  demands: DemandRow[];
  alarm_count: number;
  state_digest: string;
  busy: boolean;
  allocation?: AllocationSummary;
}

export interface ChannelQotRow {
  channel_index: number;
  center_thz: number;
  power_w: number;
  ase_w: number;
  nli_w: number;
  gsnr_db: number;
  margin_db: number;
  modulation: string;
}

export interface LinkQotRow {
  link_id: string;
  channels: ChannelQotRow[];
}

export interface GsnrReportBody {
  channels: ChannelQotRow[];
  links: LinkQotRow[];
}

export interface GsnrReply {
  session_id: string;
  service: string;
  blocked: boolean;
  allocation?: DemandAllocationRow;
  report?: GsnrReportBody;
}

// ---------------------------------------------------------------------------
// Launch-power optimization trace
// ---------------------------------------------------------------------------

export interface TraceStep {
  step_index: number;
  demand_id: string;
  channel_index: number;
  delta_db: number;
  power_dbm: number;
  objective_db: number;
}

export interface OptimizationTrace {
  steps: TraceStep[];
  initial_objective_db: number;
  final_objective_db: number;
  final_launch_dbm: Record<string, number>;
  rounds: number;
  converged: boolean;
}

// ---------------------------------------------------------------------------
// Approval tickets
// ---------------------------------------------------------------------------

export interface TicketProposal {
  demand_count: number;
  bounds_dbm: number[];
  step_db: number;
}

export interface Ticket {
  ticket_id: string;
  session_id: string;
  job_id: string;
  action: string;
  description: string;
  proposed: TicketProposal;
  status: string;
  note: string;
}

export interface TicketList {
  tickets: Ticket[];
}

// ---------------------------------------------------------------------------
// Evaluation matrix
// ---------------------------------------------------------------------------

export interface MatrixCell {
  task: string;
  condition: string;
  n: number;
  mean_accuracy: number;
  mean_similarity: number;
}

export interface MatrixReportBody {
  cells: MatrixCell[];
  rows: Record<string, unknown>[];
  seed: number;
  config: Record<string, unknown>;
  config_digest: string;
}

export interface EvalRun {
  run_id: string;
  status: string;
  params: {
    tasks: string[];
    conditions: string[];
    n_per_cell: number;
    seed: number;
  };
  error: string;
  report?: MatrixReportBody;
}

export interface EvalRunList {
  runs: EvalRun[];
}

export interface HealthReply {
  status: string;
}
