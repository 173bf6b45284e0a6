// Live queue view: schedule entries with their replication phases,
// auto-refreshing, with abort controls. An abort request refreshes the
// loop immediately, so the new phase shows within one poll interval; an
// already-terminal run gets a non-blocking notice.

import { Api, ApiFailure } from "./api.js";
import { clear, el } from "./dom.js";
import { PollLoop, PollState } from "./state.js";
import type { EntryDoc, QueueDoc, RunDoc } from "./types.js";

const LIVE_PHASES = new Set(["pending", "preparing", "executing", "cleaning"]);

export class QueueView {
  root: HTMLElement;
  loop: PollLoop<QueueDoc>;
  private api: Api;
  private table: HTMLElement;
  private notice: HTMLElement;
  private staleFlag: HTMLElement;
  private onInspect: (runId: string) => void;

  constructor(api: Api, onInspect: (runId: string) => void,
              cadenceMs = 1000) {
    this.api = api;
    this.onInspect = onInspect;
    this.loop = new PollLoop(() => api.queue(), cadenceMs);
    this.table = el("div", { class: "queue-table" });
    this.notice = el("div", { class: "notice hidden" });
    this.staleFlag = el("div", {
      class: "stale-indicator hidden",
      text: "connection lost — showing last known state",
    });
    this.root = el("div", { class: "pane queue-pane" },
                   [this.staleFlag, this.notice, this.table]);
    this.loop.subscribe((state) => this.render(state));
  }

  showNotice(message: string): void {
    clear(this.notice);
    this.notice.classList.remove("hidden");
    this.notice.append(el("span", { text: message }));
  }

  private abort(run: RunDoc): void {
    void (async () => {
      try {
        await this.api.abortRun(run.run_id);
        this.notice.classList.add("hidden");
      } catch (err) {
        if (err instanceof ApiFailure && err.status === 409) {
          this.showNotice(`${run.run_id} already terminal`);
        } else {
          this.showNotice(err instanceof Error ? err.message : String(err));
        }
      }
      await this.loop.refresh();
    })();
  }

  private render(state: PollState<QueueDoc>): void {
    this.staleFlag.classList.toggle("hidden", !state.stale);
    if (!state.data) return;
    clear(this.table);
    this.table.append(el("div", {
      class: "queue-clock",
      text: `virtual time ${state.data.now}`,
    }));
    if (state.data.entries.length === 0) {
      this.table.append(el("div", { class: "empty", text: "queue is empty" }));
      return;
    }
    for (const entry of state.data.entries) {
      this.table.append(this.entryRow(entry));
    }
  }

  private entryRow(entry: EntryDoc): HTMLElement {
    const runs = el("div", { class: "runs" });
    for (const run of entry.runs) {
      const chip = el("span", {
        class: `phase-chip phase-${run.phase}`,
        "data-run": run.run_id,
        "data-phase": run.phase,
        text: `${run.replication}/${entry.replications}: ${run.phase}`,
      });
      chip.addEventListener("click", () => this.onInspect(run.run_id));
      runs.append(chip);
      if (LIVE_PHASES.has(run.phase)) {
        const abortButton = el("button", {
          class: "abort",
          "data-abort": run.run_id,
          text: "abort",
        });
        abortButton.addEventListener("click", () => this.abort(run));
        runs.append(abortButton);
      }
    }
    return el("div", {
      class: `entry status-${entry.status}`,
      "data-entry": String(entry.seq),
      "data-experiment": entry.experiment_id,
      "data-status": entry.status,
    }, [
      el("span", { class: "entry-seq", text: `#${entry.seq}` }),
      el("span", { class: "entry-id", text: entry.experiment_id }),
      el("span", { class: "entry-user", text: entry.user }),
      el("span", {
        class: "entry-nodes",
        text: `${entry.nodes.length} nodes`,
      }),
      el("span", { class: `status status-${entry.status}`, text: entry.status }),
      runs,
    ]);
  }
}
