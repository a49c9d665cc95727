/** Single source of truth for the page. Renderers are pure functions of this
 * state; every change funnels through Store.update so views never drift.
 *
 * Invariants kept here rather than in the DOM layer:
 *   - at most one mutating request is in flight (busy flag),
 *   - skipped candidates stay hidden until the next mining pass,
 *   - scores are shown exactly as the service reported them.
 */

import type {
  CandidatePayload,
  MiningKind,
  PatternDetailPayload,
  SessionCreated,
} from "./types.js";

export type HistoryAction = "loaded" | "accepted" | "skipped" | "reset";

export interface HistoryEntry {
  iteration: number;
  action: HistoryAction;
  kind?: MiningKind;
  description?: string;
  si?: number;
  seconds?: number;
  rounds?: number;
}

export interface ViewState {
  session: SessionCreated | null;
  /** iteration counter as last reported by the service */
  iteration: number;
  /** kind of the candidate list currently on screen */
  kind: MiningKind;
  candidates: CandidatePayload[];
  skipped: Set<string>;
  selected: PatternDetailPayload | null;
  history: HistoryEntry[];
  busy: boolean;
  error: string | null;
  /** true while the list shows spread follow-ups to a just-accepted location */
  spreadOffer: boolean;
}

export function initialState(): ViewState {
  return {
    session: null,
    iteration: 0,
    kind: "location",
    candidates: [],
    skipped: new Set(),
    selected: null,
    history: [],
    busy: false,
    error: null,
    spreadOffer: false,
  };
}

export type Listener = (state: ViewState) => void;

export class Store {
  private state: ViewState = initialState();
  private listeners: Listener[] = [];

  get(): ViewState {
    return this.state;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  update(patch: Partial<ViewState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) {
      listener(this.state);
    }
  }

  /** Claims the single mutation slot; returns false when one is in flight. */
  beginMutation(): boolean {
    if (this.state.busy) {
      return false;
    }
    this.update({ busy: true, error: null });
    return true;
  }

  endMutation(error?: string): void {
    this.update({ busy: false, error: error ?? null });
  }

  pushHistory(entry: HistoryEntry): void {
    this.update({ history: [...this.state.history, entry] });
  }

  skip(id: string): void {
    const skipped = new Set(this.state.skipped);
    skipped.add(id);
    this.update({ skipped });
  }
}

/** Candidates still on offer, best SI first. Ordering uses the scores exactly
 * as delivered; nothing is recomputed client-side. */
export function visibleCandidates(state: ViewState): CandidatePayload[] {
  return state.candidates
    .filter((c) => !state.skipped.has(c.id))
    .slice()
    .sort((a, b) => b.score.si - a.score.si);
}
