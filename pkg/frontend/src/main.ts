// Application bootstrap: tabbed panes over the portal API. The API base is
// same-origin (the portal serves this app under /ui/); a token for
// mutating calls comes from the token box and sticks in localStorage.

import { Api } from "./api.js";
import { el } from "./dom.js";
import { EditorView } from "./editor.js";
import { NodesView } from "./nodes.js";
import { QueueView } from "./queue.js";
import { RunDetailView } from "./runs.js";
import { ResultsView } from "./results.js";

function start(): void {
  const api = new Api("", localStorage.getItem("meshbed-token") ?? "");

  const runDetail = new RunDetailView(api);
  const queue = new QueueView(api, (runId) => {
    runDetail.inspect(runId);
    select("runs");
  });
  const editor = new EditorView(api, () => {
    void queue.loop.refresh();
    select("queue");
  });
  const nodes = new NodesView(api);
  const results = new ResultsView(api);

  const panes: Record<string, { root: HTMLElement; activate?: () => void }> = {
    editor: { root: editor.root },
    queue: { root: queue.root, activate: () => queue.loop.start() },
    nodes: { root: nodes.root, activate: () => nodes.loop.start() },
    runs: { root: runDetail.root },
    results: { root: results.root },
  };

  const main = document.getElementById("app")!;
  const tabs = el("nav", { class: "tabs" });
  const body = el("div", { class: "pane-host" });
  const buttons = new Map<string, HTMLButtonElement>();

  function select(name: string): void {
    for (const [paneName, pane] of Object.entries(panes)) {
      const active = paneName === name;
      pane.root.classList.toggle("hidden", !active);
      buttons.get(paneName)?.classList.toggle("active", active);
      if (active) pane.activate?.();
    }
  }

  for (const name of Object.keys(panes)) {
    const button = el("button", { class: "tab", text: name });
    button.addEventListener("click", () => select(name));
    buttons.set(name, button);
    tabs.append(button);
    panes[name].root.classList.add("hidden");
    body.append(panes[name].root);
  }

  const tokenInput = el("input", {
    class: "token-input",
    placeholder: "API token",
    value: api.token,
  });
  tokenInput.addEventListener("change", () => {
    api.token = tokenInput.value.trim();
    localStorage.setItem("meshbed-token", api.token);
  });
  tabs.append(el("span", { class: "spacer" }), tokenInput);

  main.append(tabs, body);
  queue.loop.start();
  select("editor");
}

document.addEventListener("DOMContentLoaded", start);
