/** Pure HTML renderers for every view the client shows.
 *
 * All functions return strings so they can be unit-tested without a
 * DOM.  Options and candidates are emitted in the order the server sent
 * them; that order encodes the cost optimization, re-sorting it here
 * would undo it.  Numbers print via String() with no rounding so the
 * display always matches the payload.
 */

import type {
  Candidate,
  Option,
  Progress,
  Report,
  Screen,
} from "./api.js";
import type { Banner, FlowState, InlineError } from "./state.js";

export function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;")
    .replaceAll("'", "&#39;");
}

export function highlightSpan(
  text: string,
  span: [number, number],
): string {
  const [start, end] = span;
  if (start < 0 || end > text.length || start >= end) {
    return escapeHtml(text);
  }
  return (
    escapeHtml(text.slice(0, start)) +
    "<mark>" +
    escapeHtml(text.slice(start, end)) +
    "</mark>" +
    escapeHtml(text.slice(end))
  );
}

const KIND_TITLES: Record<string, string> = {
  relation: "Which table does this claim refer to?",
  key_value: "Which row key does this claim refer to?",
  attribute: "Which columns does this claim use?",
  formula: "Which check formula fits this claim?",
  final: "Does the computed value confirm the claim?",
  manual: "Type the full check for this claim",
};

export function renderValidated(
  validated: Record<string, string[]>,
): string {
  const entries = Object.entries(validated).filter(
    ([, values]) => values.length > 0,
  );
  if (entries.length === 0) return "";
  const items = entries
    .map(
      ([kind, values]) =>
        `<li><span class="kind">${escapeHtml(kind)}</span> ` +
        `${values.map((v) => `<code>${escapeHtml(v)}</code>`).join(", ")}</li>`,
    )
    .join("");
  return `<ul class="validated" aria-label="validated so far">${items}</ul>`;
}

export function renderOptions(
  options: Option[],
  selected: number[],
  multi: boolean,
): string {
  const picked = new Set(selected);
  const type = multi ? "checkbox" : "radio";
  const rows = options
    .map((option, i) => {
      const checked = picked.has(i) ? " checked" : "";
      return (
        `<li><label><input type="${type}" name="option" ` +
        `data-index="${i}"${checked}> ` +
        `<code>${escapeHtml(option.value)}</code> ` +
        `<span class="prob">${String(option.display_probability)}</span>` +
        `</label></li>`
      );
    })
    .join("");
  return `<ol class="options">${rows}</ol>`;
}

function renderValue(value: number | boolean | null): string {
  if (value === null) return "—";
  return escapeHtml(String(value));
}

export function renderCandidates(
  candidates: Candidate[],
  selected: number[],
): string {
  const picked = new Set(selected);
  const rows = candidates
    .map((candidate, i) => {
      const checked = picked.has(i) ? " checked" : "";
      const flag = candidate.matched ? "<span class=\"match\">match</span>" : "";
      const err = candidate.error
        ? `<span class="err">${escapeHtml(candidate.error)}</span>`
        : "";
      return (
        `<tr><td><input type="radio" name="candidate" data-index="${i}"` +
        `${checked}></td>` +
        `<td><code class="sql">${escapeHtml(candidate.sql)}</code><br>` +
        `<span class="formula">${escapeHtml(candidate.formula)}</span></td>` +
        `<td class="value">${renderValue(candidate.value)} ${flag}${err}</td>` +
        `</tr>`
      );
    })
    .join("");
  return (
    `<table class="candidates"><thead><tr>` +
    `<th></th><th>query</th><th>value</th>` +
    `</tr></thead><tbody>${rows}</tbody></table>`
  );
}

export function renderError(error: InlineError | null): string {
  if (!error) return "";
  const where =
    error.position !== undefined
      ? ` <span class="position">at position ${error.position}</span>`
      : "";
  return (
    `<p class="error" role="alert">` +
    `${escapeHtml(error.message)}${where}</p>`
  );
}

export function renderBanner(banner: Banner | null): string {
  if (!banner) return "";
  return (
    `<p class="banner verdict-${escapeHtml(banner.verdict)}">` +
    `claim <code>${escapeHtml(banner.claimId)}</code> marked ` +
    `<strong>${escapeHtml(banner.verdict)}</strong></p>`
  );
}

export function renderProgress(progress: Progress | null): string {
  if (!progress) return "";
  return (
    `<p class="progress">batch ${String(progress.batch)} · ` +
    `${String(progress.resolved)} / ${String(progress.claims)} resolved · ` +
    `${String(progress.pending)} pending · ` +
    `${String(progress.total_seconds)}s spent</p>`
  );
}

function needsVerdict(screen: Screen): boolean {
  return screen.kind === "final" || screen.kind === "manual";
}

export function renderScreen(state: FlowState): string {
  const screen = state.screen;
  if (state.phase === "done" || !screen) {
    return (
      renderBanner(state.banner) +
      `<section class="done"><h2>Session complete</h2>` +
      `<p><a href="#overview" data-overview>See the report</a></p></section>` +
      renderProgress(state.progress)
    );
  }
  const title = KIND_TITLES[screen.kind] ?? escapeHtml(screen.kind);
  const verdictRow = needsVerdict(screen)
    ? `<div class="verdicts">` +
      `<label><input type="radio" name="verdict" value="correct"` +
      `${state.verdict === "correct" ? " checked" : ""}> correct</label>` +
      `<label><input type="radio" name="verdict" value="incorrect"` +
      `${state.verdict === "incorrect" ? " checked" : ""}> incorrect</label>` +
      `</div>`
    : "";
  const body =
    screen.candidates !== undefined
      ? renderCandidates(screen.candidates, state.selected)
      : renderOptions(screen.options ?? [], state.selected, screen.multi);
  const placeholder =
    screen.kind === "final" || screen.kind === "formula" ||
    screen.kind === "manual"
      ? "or type the check expression"
      : screen.multi
        ? "or type missing values, comma separated"
        : "or type the correct value";
  return (
    renderBanner(state.banner) +
    `<section class="screen" data-screen-id="${escapeHtml(screen.screen_id)}">` +
    `<h2>${title}</h2>` +
    `<blockquote class="claim">${highlightSpan(
      screen.sentence_text,
      screen.claim_span,
    )}</blockquote>` +
    renderValidated(screen.validated) +
    body +
    `<div class="suggest">` +
    `<input type="text" id="suggestion" ` +
    `placeholder="${placeholder}" ` +
    `value="${escapeHtml(state.suggestion)}">` +
    `</div>` +
    verdictRow +
    renderError(state.error) +
    `<div class="actions">` +
    `<button id="submit"${state.busy ? " disabled" : ""}>Submit</button>` +
    `<button id="skip" class="secondary"` +
    `${state.busy ? " disabled" : ""}>Skip claim</button>` +
    `</div>` +
    `</section>` +
    renderProgress(state.progress)
  );
}

export function renderOverview(report: Report): string {
  const rows = report.batch_claims
    .map(
      (claim) =>
        `<li data-claim-id="${escapeHtml(claim.claim_id)}">` +
        `<span class="section">${escapeHtml(claim.section_id)}</span> ` +
        `${highlightSpan(claim.sentence_text, claim.claim_span)}</li>`,
    )
    .join("");
  const open = report.batch_claims.length
    ? `<h3>Current batch</h3><ul class="batch">${rows}</ul>`
    : `<p>No open batch.</p>`;
  return (
    `<section class="overview"><h2>Session report</h2>` +
    `<dl>` +
    `<dt>mode</dt><dd>${escapeHtml(report.mode)}</dd>` +
    `<dt>resolved</dt><dd>${String(report.resolved)} / ` +
    `${String(report.claims)}</dd>` +
    `<dt>checker seconds</dt><dd>${String(report.total_seconds)}</dd>` +
    `<dt>manual baseline</dt><dd>${String(report.manual_seconds)}</dd>` +
    `<dt>savings</dt><dd>${String(report.savings)}</dd>` +
    `</dl>` +
    open +
    `</section>`
  );
}
