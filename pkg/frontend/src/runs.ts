// Run detail: the live phase of one replication and its action timeline,
// reconstructed from the run's life-cycle events.

import { Api } from "./api.js";
import { clear, el } from "./dom.js";
import { PollLoop, PollState } from "./state.js";
import type { RunDetailDoc, RunEvent } from "./types.js";

export class RunDetailView {
  root: HTMLElement;
  loop: PollLoop<RunDetailDoc> | null = null;
  private api: Api;
  private body: HTMLElement;
  private staleFlag: HTMLElement;
  private cadenceMs: number;

  constructor(api: Api, cadenceMs = 1000) {
    this.api = api;
    this.cadenceMs = cadenceMs;
    this.body = el("div", { class: "run-detail" },
                   [el("div", { class: "empty", text: "pick a run from the queue" })]);
    this.staleFlag = el("div", {
      class: "stale-indicator hidden",
      text: "connection lost — showing last known state",
    });
    this.root = el("div", { class: "pane run-pane" },
                   [this.staleFlag, this.body]);
  }

  inspect(runId: string): void {
    if (this.loop) this.loop.stop();
    this.loop = new PollLoop(() => this.api.run(runId), this.cadenceMs);
    this.loop.subscribe((state) => this.render(state));
    this.loop.start();
  }

  stop(): void {
    if (this.loop) this.loop.stop();
  }

  private render(state: PollState<RunDetailDoc>): void {
    this.staleFlag.classList.toggle("hidden", !state.stale);
    if (!state.data) return;
    const { run, events } = state.data;
    clear(this.body);
    this.body.append(el("div", { class: "run-head" }, [
      el("span", { class: "run-id", text: run.run_id }),
      el("span", {
        class: `phase-chip phase-${run.phase}`,
        "data-phase": run.phase,
        text: run.phase,
      }),
      el("span", {
        text: `replication ${run.replication} · ${run.nodes.length} nodes · `
          + `t=${run.started}..${run.ended ?? "…"}`,
      }),
    ]));
    const timeline = el("div", { class: "timeline" });
    for (const event of events) {
      timeline.append(this.eventRow(event));
    }
    this.body.append(timeline);
    if (run.observations.length) {
      this.body.append(el("div", {
        class: "observations",
        text: `observation records: ${run.observations.join(", ")}`,
      }));
    }
  }

  private eventRow(event: RunEvent): HTMLElement {
    const kind = String(event.event);
    let text = kind;
    if (kind === "phase") {
      text = `phase → ${event.phase}`;
    } else if (kind === "action") {
      const cleanup = event.cleanup ? " (cleanup)" : "";
      text = `action ${event.command} on ${event.node}: ${event.status}${cleanup}`;
    } else if (kind === "fingerprint") {
      text = `${event.phase} fingerprint ${String(event.value).slice(0, 12)}…`;
    } else if (kind === "run_done") {
      text = `finished: ${event.phase}`;
    } else if (kind === "prepare_failed") {
      text = `prepare failed after ${event.attempts} attempts`;
    } else if (kind === "abort_requested") {
      text = "abort requested";
    }
    return el("div", {
      class: `event event-${kind}`,
      "data-event": kind,
      "data-status": String(event.status ?? ""),
    }, [el("span", { text })]);
  }
}
