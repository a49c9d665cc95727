/** Candidate table: one row per mined pattern, best surprise first. Renders
 * nothing that did not come from the service; scores are displayed verbatim.
 */

import { el, fmt } from "../dom.js";
import { visibleCandidates } from "../state.js";
import type { ViewState } from "../state.js";
import type { CandidatePayload } from "../types.js";

export interface CandidateHandlers {
  onAssimilate(candidate: CandidatePayload): void;
  onDetails(candidate: CandidatePayload): void;
  onSkip(candidate: CandidatePayload): void;
}

function emptyState(state: ViewState): HTMLElement {
  const box = el("div", "empty-state");
  if (!state.session) {
    box.append(
      el("p", undefined, "No session yet."),
      el("p", "hint", "Load the built-in synthetic benchmark or point the loader at a CSV file to start mining."),
    );
    return box;
  }
  box.append(el("p", undefined, "Nothing left to show for this pass."));
  const hints = el("ul", "hint");
  hints.append(
    el("li", undefined, "Mine again after accepting a pattern; the ranking changes as the model learns."),
    el("li", undefined, "Raise the search depth or beam width to reach narrower subgroups."),
    el("li", undefined, "Lower the description cost weight (gamma) if every candidate scores near zero."),
  );
  box.append(hints);
  return box;
}

export function renderCandidates(
  root: HTMLElement,
  state: ViewState,
  handlers: CandidateHandlers,
): void {
  root.replaceChildren();

  if (state.error) {
    const banner = el("div", "error-banner");
    banner.setAttribute("role", "alert");
    banner.textContent = state.error;
    root.append(banner);
  }

  const heading = state.spreadOffer
    ? "Spread follow-ups for the accepted subgroup"
    : state.kind === "spread"
      ? "Spread candidates"
      : "Location candidates";
  root.append(el("h2", undefined, heading));

  const visible = state.session ? visibleCandidates(state) : [];
  if (visible.length === 0) {
    root.append(emptyState(state));
    return;
  }

  const table = el("table", "candidates");
  const head = el("thead");
  const headRow = el("tr");
  for (const label of ["Pattern", "Coverage", "IC", "DL", "SI", ""]) {
    headRow.append(el("th", undefined, label));
  }
  head.append(headRow);
  table.append(head);

  const body = el("tbody");
  for (const candidate of visible) {
    const row = el("tr");
    row.dataset.patternId = candidate.id;

    const name = el("td", "pattern-text");
    name.textContent = candidate.description;
    row.append(name);
    row.append(el("td", "num", String(candidate.coverage)));
    row.append(el("td", "num", fmt(candidate.score.ic)));
    row.append(el("td", "num", fmt(candidate.score.dl, 2)));
    row.append(el("td", "num si", fmt(candidate.score.si)));

    const actions = el("td", "actions");
    const accept = el("button", "accept", "Assimilate");
    accept.disabled = state.busy;
    accept.addEventListener("click", () => handlers.onAssimilate(candidate));
    const details = el("button", undefined, "Details");
    details.addEventListener("click", () => handlers.onDetails(candidate));
    const skip = el("button", undefined, "Skip");
    skip.disabled = state.busy;
    skip.addEventListener("click", () => handlers.onSkip(candidate));
    actions.append(accept, details, skip);
    row.append(actions);
    body.append(row);
  }
  table.append(body);
  root.append(table);
}
