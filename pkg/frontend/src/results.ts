// Results view: builds a .eval pipeline for a chosen run/metric, posts it,
// and renders the returned plot-data document — a summary table plus a
// notched boxplot, or a histogram. All statistics arrive from the server.

import { Api } from "./api.js";
import { boxplotSvg, histogramSvg } from "./charts.js";
import { clear, el } from "./dom.js";
import type { BoxplotSeries, PlotDataDoc } from "./types.js";

export function boxplotPipeline(runId: string, metric: string,
                                confidence: number): string {
  return [
    "format: 1",
    "",
    "input store",
    "  kind: experiment_data",
    `  run: ${runId}`,
    `  value: ${metric}`,
    "",
    "stage summarize",
    `  confidence: ${confidence}`,
    `  name: ${metric}`,
    "",
    "output plot-data",
    "",
  ].join("\n");
}

export function histogramPipeline(runId: string, metric: string,
                                  width: number): string {
  return [
    "format: 1",
    "",
    "input store",
    "  kind: experiment_data",
    `  run: ${runId}`,
    `  value: ${metric}`,
    "",
    "stage histogram",
    `  width: ${width}`,
    "",
    "output plot-data",
    "",
  ].join("\n");
}

export function summaryTable(series: BoxplotSeries): HTMLElement {
  const fields: [string, string][] = [
    ["n", String(series.n)],
    ["mean", String(series.mean)],
    ["stddev", String(series.stddev)],
    ["confidence", String(series.confidence)],
    ["ci_low", String(series.ci_low)],
    ["ci_high", String(series.ci_high)],
    ["min", String(series.min)],
    ["q1", String(series.q1)],
    ["median", String(series.median)],
    ["q3", String(series.q3)],
    ["max", String(series.max)],
    ["notch", String(series.notch)],
  ];
  const table = el("table", { class: "summary-table",
                              "data-metric": series.name });
  const head = el("tr");
  const row = el("tr");
  for (const [name, value] of fields) {
    head.append(el("th", { text: name }));
    row.append(el("td", { "data-field": name, text: value }));
  }
  table.append(head, row);
  return table;
}

export class ResultsView {
  root: HTMLElement;
  private api: Api;
  private output: HTMLElement;
  private runInput: HTMLInputElement;
  private metricInput: HTMLInputElement;
  private widthInput: HTMLInputElement;

  constructor(api: Api) {
    this.api = api;
    this.runInput = el("input", { placeholder: "run id, e.g. 1.demo-1.1" });
    this.metricInput = el("input", {
      placeholder: "metric key", value: "delivery_ratio",
    });
    this.widthInput = el("input", {
      type: "number", value: "1", class: "width-input",
    });
    this.output = el("div", { class: "results-output" });
    const boxplotButton = el("button", { class: "primary", text: "Boxplot" });
    boxplotButton.addEventListener("click", () => void this.renderBoxplot());
    const histogramButton = el("button", { text: "Histogram" });
    histogramButton.addEventListener("click", () => void this.renderHistogram());
    this.root = el("div", { class: "pane results-pane" }, [
      el("div", { class: "results-form" }, [
        this.runInput, this.metricInput,
        boxplotButton, histogramButton,
        el("span", { text: "bin width" }), this.widthInput,
      ]),
      this.output,
    ]);
  }

  show(doc: PlotDataDoc): void {
    clear(this.output);
    if (doc.type === "boxplot") {
      for (const series of doc.series) {
        this.output.append(summaryTable(series));
        this.output.append(boxplotSvg(series));
      }
    } else if (doc.type === "histogram") {
      this.output.append(histogramSvg(doc));
    }
  }

  private fail(err: unknown): void {
    clear(this.output);
    this.output.append(el("div", {
      class: "notice",
      text: err instanceof Error ? err.message : String(err),
    }));
  }

  async renderBoxplot(): Promise<void> {
    try {
      this.show(await this.api.runPipeline(boxplotPipeline(
        this.runInput.value.trim(), this.metricInput.value.trim(), 0.95)));
    } catch (err) {
      this.fail(err);
    }
  }

  async renderHistogram(): Promise<void> {
    try {
      this.show(await this.api.runPipeline(histogramPipeline(
        this.runInput.value.trim(), this.metricInput.value.trim(),
        Number(this.widthInput.value) || 1)));
    } catch (err) {
      this.fail(err);
    }
  }
}
