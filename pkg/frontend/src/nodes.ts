// Node grid: one card per node with live up/down state, the
// monitoring-derived availability figure as provided by the API, and an
// up/down sparkline over the trailing window.

import { Api } from "./api.js";
import { sparklineSvg } from "./charts.js";
import { clear, el } from "./dom.js";
import { PollLoop, PollState } from "./state.js";
import type { NodesDoc } from "./types.js";

export class NodesView {
  root: HTMLElement;
  loop: PollLoop<NodesDoc>;
  private api: Api;
  private grid: HTMLElement;
  private staleFlag: HTMLElement;
  private sparklines = new Map<string, SVGElement>();
  private lastSparkFetch = 0;

  constructor(api: Api, cadenceMs = 2000) {
    this.api = api;
    this.loop = new PollLoop(() => api.nodes(), cadenceMs);
    this.grid = el("div", { class: "node-grid" });
    this.staleFlag = el("div", {
      class: "stale-indicator hidden",
      text: "connection lost — showing last known state",
    });
    this.root = el("div", { class: "pane nodes-pane" },
                   [this.staleFlag, this.grid]);
    this.loop.subscribe((state) => this.render(state));
  }

  private render(state: PollState<NodesDoc>): void {
    this.staleFlag.classList.toggle("hidden", !state.stale);
    if (!state.data) return;
    const doc = state.data;
    clear(this.grid);
    for (const node of doc.nodes) {
      const availability = node.availability === null
        ? "–"
        : node.availability.toFixed(4);
      const card = el("div", {
        class: `node-card ${node.up ? "up" : "down"}`,
        "data-node": node.id,
        "data-up": String(node.up),
      }, [
        el("div", { class: "node-id", text: node.id }),
        el("div", { class: "node-meta",
                    text: `${node.building} · degree ${node.degree}` }),
        el("div", { class: "node-availability",
                    text: `availability ${availability}` }),
      ]);
      const spark = this.sparklines.get(node.id);
      if (spark) card.append(spark);
      this.grid.append(card);
    }
    // sparkline samples refresh on a slower cadence than the grid itself
    if (doc.now - this.lastSparkFetch >= 0) {
      this.lastSparkFetch = doc.now;
      void this.fetchSparklines(doc);
    }
  }

  private async fetchSparklines(doc: NodesDoc): Promise<void> {
    const t0 = Math.max(0, doc.now - doc.window);
    const t1 = doc.now + 1;
    for (const node of doc.nodes) {
      try {
        const monitoring = await this.api.nodeMonitoring(node.id, t0, t1);
        this.sparklines.set(node.id, sparklineSvg(monitoring.records));
        const card = this.grid.querySelector(`[data-node="${node.id}"]`);
        if (card) {
          const old = card.querySelector("svg.sparkline");
          if (old) old.remove();
          card.append(this.sparklines.get(node.id)!);
        }
      } catch {
        // sparkline is cosmetic; the stale indicator covers real outages
      }
    }
  }
}
