/** Payload shapes of the session service, mirrored field-for-field. */

export type MiningKind = "location" | "spread";

export interface ScoreBreakdown {
  ic: number;
  dl: number;
  si: number;
}

export interface ConditionPayload {
  attribute: string;
  op: string;
  value: number | string;
}

export interface PatternPayload {
  kind: MiningKind;
  conditions: ConditionPayload[];
  indices: number[];
  /** location patterns only */
  mean?: number[];
  /** spread patterns only */
  direction?: number[];
  variance?: number;
}

export interface CandidatePayload {
  id: string;
  kind: MiningKind;
  pattern: PatternPayload;
  score: ScoreBreakdown;
  depth: number;
  description: string;
  coverage: number;
}

export interface SessionCreated {
  id: string;
  iteration: number;
  n: number;
  d_y: number;
  target_names: string[];
}

export interface MineResponse {
  kind: MiningKind;
  iteration: number;
  candidates: CandidatePayload[];
}

export interface TimingRecord {
  iteration: number;
  kind: MiningKind;
  seconds: number;
  rounds: number;
}

export interface AssimilateResponse {
  iteration: number;
  timing: TimingRecord;
  assimilated: string[];
}

export interface AttributeDetailPayload {
  name: string;
  expected_mean: number;
  ci_low: number;
  ci_high: number;
  observed_mean: number;
  si: number;
}

export interface PatternDetailPayload {
  id: string;
  kind: MiningKind;
  description: string;
  coverage: number;
  score: ScoreBreakdown;
  attributes: AttributeDetailPayload[];
  direction: number[] | null;
  expected_variance: number | null;
  observed_variance: number | null;
  cdf_grid: number[] | null;
  cdf_model: number[] | null;
  cdf_subgroup: number[] | null;
}

export interface BlockPayload {
  members: number[];
  mu: number[];
  sigma: number[][];
  precision: number[][];
  shift: number[];
}

export interface ModelPayload {
  d_y: number;
  n: number;
  blocks: BlockPayload[];
  history: PatternPayload[];
}

export interface SessionState {
  schema_version: number;
  dataset: Record<string, unknown>;
  gamma: number;
  eta: number;
  seed: number;
  prior: { mean: number[]; covariance: number[][] };
  iteration: number;
  assimilated: string[];
  spread_anchor: string | null;
  model: ModelPayload;
  known: CandidatePayload[];
  candidates: CandidatePayload[];
  timings: TimingRecord[];
}

export type DatasetRequest =
  | { kind: "synthetic"; seed: number }
  | { kind: "csv"; path: string; schema_config: Record<string, unknown> };

export interface CreateSessionRequest {
  dataset: DatasetRequest;
  gamma?: number;
  eta?: number;
  seed?: number;
}

export interface MineRequest {
  kind?: MiningKind;
  params?: Record<string, number>;
  two_sparse?: boolean;
}

export interface ErrorEnvelope {
  error: { code: string; message: string };
}
