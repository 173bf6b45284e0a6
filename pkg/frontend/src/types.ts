// API document shapes, mirroring docs/api.md. The UI renders these values
// verbatim: every number on screen is an API field, never a recomputation.

export interface ValidationIssue {
  code: string;
  location: string;
  message: string;
}

export interface ValidationReport {
  ok: boolean;
  errors: ValidationIssue[];
  warnings: ValidationIssue[];
}

export interface SubmitResponse {
  id: string;
  report: ValidationReport;
}

export interface RunDoc {
  run_id: string;
  experiment_id: string;
  replication: number;
  phase: string;
  nodes: string[];
  started: number;
  ended: number | null;
  prepare_fingerprint: string | null;
  cleanup_fingerprint: string | null;
  observations: number[];
}

export interface EntryDoc {
  seq: number;
  experiment_id: string;
  user: string;
  requested_start: number;
  status: string;
  replications: number;
  nodes: string[];
  activated_at: number | null;
  finished_at: number | null;
  runs: RunDoc[];
}

export interface QueueDoc {
  now: number;
  entries: EntryDoc[];
}

export interface RunEvent {
  event: string;
  [key: string]: unknown;
}

export interface RunDetailDoc {
  run: RunDoc;
  events: RunEvent[];
}

export interface NodeDoc {
  id: string;
  building: string;
  degree: number;
  up: boolean;
  availability: number | null;
}

export interface NodesDoc {
  now: number;
  window: number;
  nodes: NodeDoc[];
}

export interface MonitoringSample {
  timestamp: number;
  up: boolean;
  [key: string]: unknown;
}

export interface MonitoringDoc {
  node: string;
  window: [number, number];
  records: MonitoringSample[];
}

export interface BoxplotSeries {
  name: string;
  n: number;
  mean: number;
  stddev: number;
  confidence: number;
  ci_low: number;
  ci_high: number;
  min: number;
  q1: number;
  median: number;
  q3: number;
  max: number;
  notch: number;
  notch_low: number;
  notch_high: number;
  ci_degenerate: boolean;
}

export interface BoxplotDoc {
  type: "boxplot";
  series: BoxplotSeries[];
}

export interface HistogramDoc {
  type: "histogram";
  width: number;
  bins: { start: number; count: number }[];
}

export type PlotDataDoc = BoxplotDoc | HistogramDoc;

export interface HealthDoc {
  status: string;
  now: number;
  nodes: number;
  queue_depth: number;
}
