/** Session timeline: what was accepted or skipped, in order, with the model
 * update cost reported by the service for each acceptance. */

import { el, fmt } from "../dom.js";
import type { ViewState } from "../state.js";

export function renderHistory(root: HTMLElement, state: ViewState): void {
  root.replaceChildren();
  root.append(el("h2", undefined, "History"));

  if (state.history.length === 0) {
    root.append(el("p", "placeholder", "No actions yet."));
    return;
  }

  const list = el("ol", "history");
  for (const entry of state.history) {
    const item = el("li", `history-${entry.action}`);
    const head = el("span", "history-head", `[${entry.iteration}] ${entry.action}`);
    item.append(head);
    if (entry.kind) {
      item.append(el("span", "history-kind", entry.kind));
    }
    if (entry.description) {
      item.append(el("span", "pattern-text", entry.description));
    }
    const facts: string[] = [];
    if (entry.si !== undefined) {
      facts.push(`si=${fmt(entry.si)}`);
    }
    if (entry.seconds !== undefined) {
      facts.push(`${fmt(entry.seconds * 1000, 1)} ms`);
    }
    if (entry.rounds !== undefined) {
      facts.push(`${entry.rounds} rounds`);
    }
    if (facts.length > 0) {
      item.append(el("span", "history-facts", facts.join(", ")));
    }
    list.append(item);
  }
  root.append(list);
  // newest at the top
  list.style.display = "flex";
  list.style.flexDirection = "column-reverse";
}
