// Live-loop behavior against a tiny stateful fake portal: a submitted
// description appears in the queue view within 2 s, an aborted run shows
// its new phase within one poll interval, and an abort on a terminal run
// degrades to a non-blocking notice.

import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";
import { Api } from "../src/api.js";
import { EditorView } from "../src/editor.js";
import { QueueView } from "../src/queue.js";
import type { EntryDoc } from "../src/types.js";

const VALID_DESC = `format: 1

experiment
  id: live-1
  replications: 1

group g
  role: client
  nodes: n1

action
  target: g
  command: noop
`;

class FakePortal {
  now = 0;
  entries: EntryDoc[] = [];
  submitted = new Map<string, string>();
  failNextQueue = false;

  fetch = async (input: string | URL | Request,
                 init?: RequestInit): Promise<Response> => {
    const url = String(input);
    const method = init?.method ?? "GET";
    const respond = (status: number, doc: unknown) =>
      new Response(JSON.stringify(doc), { status });

    if (method === "POST" && url === "/experiments") {
      const id = /id: (\S+)/.exec(String(init?.body))![1];
      this.submitted.set(id, String(init?.body));
      return respond(201, { id, report: { ok: true, errors: [], warnings: [] } });
    }
    const schedule = /^\/experiments\/(.+)\/schedule$/.exec(url);
    if (method === "POST" && schedule) {
      const entry: EntryDoc = {
        seq: this.entries.length + 1,
        experiment_id: schedule[1],
        user: "tester",
        requested_start: 0,
        status: "active",
        replications: 1,
        nodes: ["n1"],
        activated_at: this.now,
        finished_at: null,
        runs: [{
          run_id: `${this.entries.length + 1}.${schedule[1]}.1`,
          experiment_id: schedule[1],
          replication: 1,
          phase: "executing",
          nodes: ["n1"],
          started: this.now,
          ended: null,
          prepare_fingerprint: "f",
          cleanup_fingerprint: null,
          observations: [],
        }],
      };
      this.entries.push(entry);
      return respond(201, { entry });
    }
    const abort = /^\/runs\/(.+)$/.exec(url);
    if (method === "DELETE" && abort) {
      for (const entry of this.entries) {
        for (const run of entry.runs) {
          if (run.run_id === abort[1]) {
            if (["done", "failed", "aborted"].includes(run.phase)) {
              return respond(409, { error: { code: "RUN_TERMINAL",
                                             message: "already terminal" } });
            }
            run.phase = "aborted";
            run.ended = this.now;
            entry.status = "aborted";
            return respond(200, { run });
          }
        }
      }
      return respond(404, { error: { code: "UNKNOWN_RUN", message: "no" } });
    }
    if (method === "GET" && url === "/queue") {
      if (this.failNextQueue) {
        this.failNextQueue = false;
        throw new TypeError("connection refused");
      }
      this.now += 1;
      return respond(200, { now: this.now, entries: this.entries });
    }
    return respond(404, { error: { code: "NO_ROUTE", message: url } });
  };
}

describe("queue live loop", () => {
  let portal: FakePortal;
  let api: Api;

  beforeEach(() => {
    vi.useFakeTimers();
    portal = new FakePortal();
    api = new Api("", "tok", portal.fetch as unknown as typeof fetch);
  });

  afterEach(() => {
    vi.useRealTimers();
  });

  it("a description submitted through the editor reaches the queue view within 2 s", async () => {
    const queue = new QueueView(api, () => {}, 1000);
    queue.loop.start();
    const editor = new EditorView(api, () => {});
    editor.buffer = VALID_DESC;

    await editor.submit();
    const scheduleButton = editor.root.querySelector(
      ".schedule-box button") as HTMLButtonElement;
    scheduleButton.click();

    await vi.advanceTimersByTimeAsync(2000);
    const entry = queue.root.querySelector('[data-experiment="live-1"]');
    expect(entry).not.toBeNull();
    expect(entry!.getAttribute("data-status")).toBe("active");
    queue.loop.stop();
  });

  async function scheduledQueue(): Promise<QueueView> {
    const queue = new QueueView(api, () => {}, 1000);
    await api.submitExperiment(VALID_DESC);
    await api.scheduleExperiment("live-1", 0);
    queue.loop.start();
    await vi.advanceTimersByTimeAsync(1000);
    return queue;
  }

  it("aborting an executing run shows aborted within one poll interval", async () => {
    const queue = await scheduledQueue();
    const chip = queue.root.querySelector("[data-run]")!;
    expect(chip.getAttribute("data-phase")).toBe("executing");

    const abortButton = queue.root.querySelector(
      "[data-abort]") as HTMLButtonElement;
    abortButton.click();
    await vi.advanceTimersByTimeAsync(1000);   // one poll interval

    const updated = queue.root.querySelector("[data-run]")!;
    expect(updated.getAttribute("data-phase")).toBe("aborted");
    expect(queue.root.querySelector('[data-status="aborted"]')).not.toBeNull();
    queue.loop.stop();
  });

  it("aborting a terminal run shows a non-blocking already-terminal notice", async () => {
    const queue = await scheduledQueue();
    portal.entries[0].runs[0].phase = "done";
    portal.entries[0].status = "done";
    await queue.loop.refresh();

    // the abort control is gone for terminal runs; drive the API directly
    // the way a stale click would
    const run = portal.entries[0].runs[0];
    queue["abort"](run);
    await vi.advanceTimersByTimeAsync(1000);
    const notice = queue.root.querySelector(".notice")!;
    expect(notice.classList.contains("hidden")).toBe(false);
    expect(notice.textContent).toContain("already terminal");
    // the view keeps rendering normally
    expect(queue.root.querySelector('[data-experiment="live-1"]')).not.toBeNull();
    queue.loop.stop();
  });

  it("a failed poll raises the stale indicator and recovery clears it", async () => {
    const queue = await scheduledQueue();
    expect(queue.root.querySelector(".stale-indicator.hidden")).not.toBeNull();

    portal.failNextQueue = true;
    await vi.advanceTimersByTimeAsync(1000);
    expect(queue.root.querySelector(".stale-indicator.hidden")).toBeNull();
    // last good data stays on screen
    expect(queue.root.querySelector('[data-experiment="live-1"]')).not.toBeNull();

    await vi.advanceTimersByTimeAsync(1000);
    expect(queue.root.querySelector(".stale-indicator.hidden")).not.toBeNull();
    queue.loop.stop();
  });
});
