// Thin typed client over the portal HTTP API. The UI talks to nothing else.

import type {
  HealthDoc,
  MonitoringDoc,
  NodesDoc,
  PlotDataDoc,
  QueueDoc,
  RunDetailDoc,
  SubmitResponse,
  ValidationReport,
} from "./types.js";

export class ApiFailure extends Error {
  status: number;
  code: string;
  doc: Record<string, unknown>;

  constructor(status: number, code: string, message: string,
              doc: Record<string, unknown> = {}) {
    super(message);
    this.status = status;
    this.code = code;
    this.doc = doc;
  }
}

type FetchLike = typeof fetch;

export class Api {
  base: string;
  token: string;
  private fetchFn: FetchLike;

  constructor(base = "", token = "", fetchFn: FetchLike = fetch) {
    this.base = base.replace(/\/$/, "");
    this.token = token;
    this.fetchFn = fetchFn;
  }

  private async call<T>(method: string, path: string, body?: string,
                        contentType = "text/plain"): Promise<T> {
    const headers: Record<string, string> = {};
    if (body !== undefined) headers["Content-Type"] = contentType;
    if (method !== "GET" && this.token) {
      headers["Authorization"] = `Bearer ${this.token}`;
    }
    const response = await this.fetchFn(this.base + path,
                                        { method, headers, body });
    const text = await response.text();
    let doc: Record<string, unknown> = {};
    try {
      doc = text ? JSON.parse(text) : {};
    } catch {
      doc = { raw: text };
    }
    if (!response.ok) {
      const err = (doc.error ?? {}) as { code?: string; message?: string };
      throw new ApiFailure(response.status, err.code ?? "HTTP",
                           err.message ?? `HTTP ${response.status}`, doc);
    }
    return doc as T;
  }

  health(): Promise<HealthDoc> {
    return this.call("GET", "/health");
  }

  submitExperiment(text: string): Promise<SubmitResponse> {
    return this.call("POST", "/experiments", text);
  }

  validateExperiment(text: string): Promise<SubmitResponse> {
    return this.call("POST", "/experiments?validate_only=1", text);
  }

  scheduleExperiment(id: string, start: number): Promise<unknown> {
    return this.call("POST", `/experiments/${id}/schedule`,
                     JSON.stringify({ start }), "application/json");
  }

  queue(): Promise<QueueDoc> {
    return this.call("GET", "/queue");
  }

  run(runId: string): Promise<RunDetailDoc> {
    return this.call("GET", `/runs/${runId}`);
  }

  abortRun(runId: string): Promise<unknown> {
    return this.call("DELETE", `/runs/${runId}`);
  }

  nodes(windowS = 3600): Promise<NodesDoc> {
    return this.call("GET", `/nodes?window=${windowS}`);
  }

  nodeMonitoring(nodeId: string, t0: number, t1: number): Promise<MonitoringDoc> {
    return this.call("GET", `/nodes/${nodeId}/monitoring?window=${t0}:${t1}`);
  }

  runPipeline(evalText: string): Promise<PlotDataDoc> {
    return this.call("POST", "/pipelines", evalText);
  }
}

// Reported validation outcome for an ApiFailure from POST /experiments,
// which carries the report alongside the error.
export function failureReport(err: ApiFailure): ValidationReport | null {
  const report = err.doc["report"];
  return report ? (report as ValidationReport) : null;
}
