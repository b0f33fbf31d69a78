/** Browser bootstrap: URL hash -> state machine -> innerHTML.
 *
 * The hash carries everything the client remembers
 * (#/<session>/<checker> or #overview suffix); a reload rebuilds the
 * exact screen from GET /next.  One tab drives one checker.
 */

import { Api } from "./api.js";
import { renderOverview, renderScreen } from "./render.js";
import { SessionFlow } from "./state.js";

const app = document.getElementById("app");
if (!app) throw new Error("missing #app container");
const root: HTMLElement = app;

const params = new URLSearchParams(window.location.search);
const api = new Api(params.get("api") ?? "");

interface Route {
  sessionId: string;
  checker: string;
  overview: boolean;
}

function parseRoute(): Route | null {
  const parts = window.location.hash.replace(/^#\/?/, "").split("/");
  if (!parts[0]) return null;
  return {
    sessionId: parts[0],
    checker: parts[1] || "checker-1",
    overview: parts[2] === "overview",
  };
}

let flow: SessionFlow | null = null;

function redraw(): void {
  if (flow) root.innerHTML = renderScreen(flow.state);
}

async function showOverview(route: Route): Promise<void> {
  const report = await api.report(route.sessionId);
  root.innerHTML =
    renderOverview(report) +
    `<p><a href="#/${route.sessionId}/${route.checker}">Back to checking</a></p>`;
}

async function navigate(): Promise<void> {
  const route = parseRoute();
  if (!route) {
    root.innerHTML =
      `<section class="empty"><h2>No session</h2>` +
      `<p>Open <code>#/&lt;session-id&gt;/&lt;checker-id&gt;</code> ` +
      `to start checking.</p></section>`;
    flow = null;
    return;
  }
  if (route.overview) {
    await showOverview(route);
    flow = null;
    return;
  }
  flow = new SessionFlow(api, route.sessionId, route.checker);
  await flow.refresh();
  redraw();
}

root.addEventListener("click", (event) => {
  if (!flow) return;
  const target = event.target as HTMLElement;
  const overviewLink = target.closest<HTMLAnchorElement>("a[data-overview]");
  if (overviewLink) {
    // the full route keeps the session in the URL across the jump
    event.preventDefault();
    window.location.hash = `#/${flow.sessionId}/${flow.checker}/overview`;
    return;
  }
  const optionInput = target.closest<HTMLInputElement>("input[data-index]");
  if (optionInput) {
    flow.toggleOption(Number(optionInput.dataset.index));
    redraw();
    return;
  }
  const verdictInput = target.closest<HTMLInputElement>(
    "input[name=verdict]",
  );
  if (verdictInput) {
    flow.setVerdict(verdictInput.value as "correct" | "incorrect");
    redraw();
    return;
  }
  if (target.closest("#submit")) {
    void flow.submit().then(redraw);
    return;
  }
  if (target.closest("#skip")) {
    void flow.skip().then(redraw);
  }
});

root.addEventListener("input", (event) => {
  const target = event.target as HTMLInputElement;
  if (flow && target.id === "suggestion") {
    // no redraw: the input already shows the text being typed
    flow.setSuggestion(target.value);
  }
});

window.addEventListener("hashchange", () => void navigate());
void navigate();
