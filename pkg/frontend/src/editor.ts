// Experiment editor: a plain text buffer for .desc documents with
// server-side validation. Parse errors carry a line directly; validation
// issues name a section ("group g2", "action 3"), which anchorIssues maps
// back to buffer lines so each message renders next to its line.

import { Api, ApiFailure, failureReport } from "./api.js";
import { clear, el } from "./dom.js";
import type { ValidationIssue, ValidationReport } from "./types.js";

export interface AnchoredIssue extends ValidationIssue {
  line: number;               // 1-based; 0 when no anchor was found
  severity: "error" | "warning";
}

export function anchorIssues(buffer: string,
                             report: ValidationReport): AnchoredIssue[] {
  const lines = buffer.split("\n");
  const sectionLines = {
    experiment: 0,
    traffic: 0,
    action: [] as number[],
    cleanup: [] as number[],
    group: new Map<string, number>(),
    metric: new Map<string, number>(),
  };
  let inMetrics = false;
  lines.forEach((raw, index) => {
    const lineNo = index + 1;
    if (/^\s*#/.test(raw) || raw.trim() === "") return;
    if (!raw.startsWith(" ")) {
      inMetrics = false;
      const [word, arg] = raw.split(/\s+/, 2);
      if (word === "experiment" && !sectionLines.experiment) {
        sectionLines.experiment = lineNo;
      } else if (word === "traffic" && !sectionLines.traffic) {
        sectionLines.traffic = lineNo;
      } else if (word === "action") {
        sectionLines.action.push(lineNo);
      } else if (word === "cleanup") {
        sectionLines.cleanup.push(lineNo);
      } else if (word === "group" && arg) {
        sectionLines.group.set(arg, lineNo);
      } else if (word === "metrics") {
        inMetrics = true;
      }
      return;
    }
    if (inMetrics) {
      const match = /^ {2}([A-Za-z0-9_.-]+):/.exec(raw);
      if (match && !sectionLines.metric.has(match[1])) {
        sectionLines.metric.set(match[1], lineNo);
      }
    }
  });

  const locate = (location: string): number => {
    const [kind, arg] = location.split(/\s+/, 2);
    if (kind === "experiment") return sectionLines.experiment;
    if (kind === "traffic") return sectionLines.traffic;
    if (kind === "group") return sectionLines.group.get(arg) ?? 0;
    if (kind === "metric") return sectionLines.metric.get(arg) ?? 0;
    if (kind === "action") return sectionLines.action[Number(arg) - 1] ?? 0;
    if (kind === "cleanup") return sectionLines.cleanup[Number(arg) - 1] ?? 0;
    return 0;
  };

  const anchored: AnchoredIssue[] = [];
  for (const issue of report.errors) {
    anchored.push({ ...issue, line: locate(issue.location), severity: "error" });
  }
  for (const issue of report.warnings) {
    anchored.push({ ...issue, line: locate(issue.location),
                    severity: "warning" });
  }
  anchored.sort((a, b) => a.line - b.line);
  return anchored;
}

const STARTER = `format: 1

experiment
  id: my-experiment
  replications: 3
  duration_limit: 600

group g
  role: client
  nodes: n1 n2

action
  target: g
  command: ping_flood dest=n3 count=10
  start: 10
  timeout: 60
`;

export class EditorView {
  root: HTMLElement;
  private api: Api;
  private textarea: HTMLTextAreaElement;
  private issueList: HTMLElement;
  private banner: HTMLElement;
  private scheduleBox: HTMLElement;
  private onScheduled: (id: string) => void;

  constructor(api: Api, onScheduled: (id: string) => void) {
    this.api = api;
    this.onScheduled = onScheduled;
    this.textarea = el("textarea", {
      class: "editor-buffer",
      spellcheck: "false",
      rows: "18",
    });
    this.textarea.value = STARTER;
    this.banner = el("div", { class: "banner hidden" });
    this.issueList = el("div", { class: "issue-list" });
    this.scheduleBox = el("div", { class: "schedule-box hidden" });
    const submit = el("button", { class: "primary", text: "Validate & submit" });
    submit.addEventListener("click", () => void this.submit());
    this.root = el("div", { class: "pane editor-pane" }, [
      this.banner,
      this.textarea,
      el("div", { class: "editor-actions" }, [submit]),
      this.scheduleBox,
      this.issueList,
    ]);
  }

  get buffer(): string {
    return this.textarea.value;
  }

  set buffer(text: string) {
    this.textarea.value = text;
  }

  private showBanner(message: string, retriable: boolean): void {
    clear(this.banner);
    this.banner.classList.remove("hidden");
    this.banner.append(el("span", { text: message }));
    if (retriable) {
      const retry = el("button", { text: "retry" });
      retry.addEventListener("click", () => void this.submit());
      this.banner.append(retry);
    }
  }

  private hideBanner(): void {
    this.banner.classList.add("hidden");
    clear(this.banner);
  }

  private renderIssues(anchored: AnchoredIssue[]): void {
    clear(this.issueList);
    for (const issue of anchored) {
      const where = issue.line > 0 ? `line ${issue.line}` : issue.location;
      this.issueList.append(el("div", {
        class: `issue ${issue.severity}`,
        "data-line": String(issue.line),
        "data-code": issue.code,
      }, [
        el("span", { class: "issue-where", text: where }),
        el("span", { class: "issue-code", text: issue.code }),
        el("span", { class: "issue-message", text: issue.message }),
      ]));
    }
  }

  private offerSchedule(id: string): void {
    clear(this.scheduleBox);
    this.scheduleBox.classList.remove("hidden");
    const startInput = el("input", {
      type: "number", value: "0", class: "start-input",
    });
    const button = el("button", { class: "primary", text: `Schedule ${id}` });
    button.addEventListener("click", () => {
      void (async () => {
        try {
          await this.api.scheduleExperiment(id, Number(startInput.value));
          this.scheduleBox.classList.add("hidden");
          this.onScheduled(id);
        } catch (err) {
          this.showBanner(err instanceof Error ? err.message : String(err),
                          false);
        }
      })();
    });
    this.scheduleBox.append(
      el("span", { text: `${id} is valid — start at virtual time ` }),
      startInput,
      button,
    );
  }

  async submit(): Promise<void> {
    this.hideBanner();
    this.scheduleBox.classList.add("hidden");
    const buffer = this.buffer;
    try {
      const result = await this.api.submitExperiment(buffer);
      this.renderIssues(anchorIssues(buffer, result.report));
      this.offerSchedule(result.id);
    } catch (err) {
      if (err instanceof ApiFailure) {
        const report = failureReport(err);
        if (report) {
          this.renderIssues(anchorIssues(buffer, report));
          return;
        }
        if (err.code === "PARSE") {
          const line = Number(err.doc["error"] &&
            (err.doc["error"] as Record<string, unknown>)["line"]) || 0;
          this.renderIssues([{
            code: "PARSE", location: "document", message: err.message,
            line, severity: "error",
          } as AnchoredIssue].map((issue) => issue));
          return;
        }
        this.showBanner(`${err.code}: ${err.message}`, false);
        return;
      }
      // network failure: buffer untouched, submission retriable
      this.showBanner(
        `network failure: ${err instanceof Error ? err.message : err}`, true);
    }
  }
}
