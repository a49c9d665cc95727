/** Page driver. One Controller owns the iteration loop:
 *
 *   load -> mine locations -> (details?) -> accept -> spread offer -> accept/skip -> mine locations ...
 *
 * Accepting a location immediately offers spread follow-ups for the same
 * subgroup; declining them all resumes the location track. All mutations run
 * one at a time and 409 busy answers are retried with backoff.
 */

import { ApiError, Client, withBusyRetry } from "./api.js";
import { el } from "./dom.js";
import { renderCandidates } from "./render/candidates.js";
import { renderDetail } from "./render/detail.js";
import { renderHistory } from "./render/history.js";
import { Store, visibleCandidates } from "./state.js";
import type { ViewState } from "./state.js";
import type { CandidatePayload, CreateSessionRequest, MiningKind } from "./types.js";

function describeError(err: unknown): string {
  if (err instanceof ApiError) {
    return `${err.code}: ${err.message}`;
  }
  return err instanceof Error ? err.message : String(err);
}

export class Controller {
  constructor(
    private readonly client: Client,
    private readonly store: Store,
  ) {}

  private sid(): string {
    const session = this.store.get().session;
    if (!session) {
      throw new Error("no active session");
    }
    return session.id;
  }

  /** Runs one mutating flow; refuses to start while another is in flight. */
  private async exclusive(fn: () => Promise<void>): Promise<void> {
    if (!this.store.beginMutation()) {
      return;
    }
    try {
      await fn();
      this.store.endMutation();
    } catch (err) {
      this.store.endMutation(describeError(err));
    }
  }

  private async mineInner(kind: MiningKind, spreadOffer: boolean): Promise<void> {
    const request = kind === "location" ? {} : { kind };
    const response = await withBusyRetry(() => this.client.mine(this.sid(), request));
    this.store.update({
      kind,
      iteration: response.iteration,
      candidates: response.candidates,
      skipped: new Set<string>(),
      selected: null,
      spreadOffer,
    });
  }

  async load(request: CreateSessionRequest): Promise<void> {
    await this.exclusive(async () => {
      const session = await this.client.createSession(request);
      this.store.update({
        session,
        iteration: session.iteration,
        kind: "location",
        candidates: [],
        skipped: new Set<string>(),
        selected: null,
        history: [],
        spreadOffer: false,
      });
      this.store.pushHistory({ iteration: session.iteration, action: "loaded" });
      await this.mineInner("location", false);
    });
  }

  async mine(kind: MiningKind): Promise<void> {
    await this.exclusive(() => this.mineInner(kind, false));
  }

  async accept(candidate: CandidatePayload): Promise<void> {
    await this.exclusive(async () => {
      let response;
      try {
        response = await withBusyRetry(() => this.client.assimilate(this.sid(), candidate.id));
      } catch (err) {
        if (err instanceof ApiError && err.status === 410) {
          // someone advanced the session under us; refresh the list
          const state = this.store.get();
          await this.mineInner(state.kind, state.spreadOffer);
          throw new Error("that candidate went stale; the list has been refreshed");
        }
        throw err;
      }
      this.store.pushHistory({
        iteration: response.timing.iteration,
        action: "accepted",
        kind: candidate.kind,
        description: candidate.description,
        si: candidate.score.si,
        seconds: response.timing.seconds,
        rounds: response.timing.rounds,
      });
      this.store.update({ iteration: response.iteration });
      if (candidate.kind === "location") {
        await this.mineInner("spread", true);
      } else {
        await this.mineInner("location", false);
      }
    });
  }

  async details(candidate: CandidatePayload): Promise<void> {
    try {
      const detail = await this.client.patternDetail(this.sid(), candidate.id);
      this.store.update({ selected: detail, error: null });
    } catch (err) {
      this.store.update({ error: describeError(err) });
    }
  }

  skip(candidate: CandidatePayload): void {
    this.store.skip(candidate.id);
    this.store.pushHistory({
      iteration: this.store.get().iteration,
      action: "skipped",
      kind: candidate.kind,
      description: candidate.description,
      si: candidate.score.si,
    });
    const state = this.store.get();
    if (state.spreadOffer && visibleCandidates(state).length === 0) {
      // the whole spread offer was declined; resume the location track
      void this.mine("location");
    }
  }

  async reset(): Promise<void> {
    await this.exclusive(async () => {
      const response = await withBusyRetry(() => this.client.reset(this.sid()));
      this.store.update({
        iteration: response.iteration,
        candidates: [],
        skipped: new Set<string>(),
        selected: null,
        spreadOffer: false,
      });
      this.store.pushHistory({ iteration: response.iteration, action: "reset" });
      await this.mineInner("location", false);
    });
  }
}

function renderStatus(root: HTMLElement, state: ViewState): void {
  root.replaceChildren();
  if (!state.session) {
    root.append(el("span", "placeholder", "no session"));
    return;
  }
  const s = state.session;
  root.append(
    el(
      "span",
      undefined,
      `session ${s.id} · ${s.n} rows · targets ${s.target_names.join(", ")} · iteration ${state.iteration}`,
    ),
  );
  if (state.busy) {
    root.append(el("span", "busy-flag", "working…"));
  }
}

function readNumber(input: HTMLInputElement, fallback: number): number {
  const value = Number(input.value);
  return Number.isFinite(value) ? value : fallback;
}

export function bootstrap(doc: Document): void {
  const byId = (id: string): HTMLElement => {
    const node = doc.getElementById(id);
    if (!node) {
      throw new Error(`missing #${id}`);
    }
    return node;
  };

  const client = new Client("");
  const store = new Store();
  const controller = new Controller(client, store);

  const candidatesRoot = byId("candidates");
  const detailRoot = byId("detail");
  const historyRoot = byId("history");
  const statusRoot = byId("status");

  const form = byId("load-form") as HTMLFormElement;
  const kindSelect = byId("dataset-kind") as HTMLSelectElement;
  const csvFields = byId("csv-fields");
  const seedInput = byId("seed") as HTMLInputElement;
  const gammaInput = byId("gamma") as HTMLInputElement;
  const etaInput = byId("eta") as HTMLInputElement;
  const pathInput = byId("csv-path") as HTMLInputElement;
  const targetsInput = byId("csv-targets") as HTMLInputElement;
  const mineLocation = byId("mine-location") as HTMLButtonElement;
  const mineSpread = byId("mine-spread") as HTMLButtonElement;
  const resetButton = byId("reset-session") as HTMLButtonElement;

  kindSelect.addEventListener("change", () => {
    csvFields.hidden = kindSelect.value !== "csv";
  });

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const seed = Math.trunc(readNumber(seedInput, 0));
    const request: CreateSessionRequest = {
      dataset:
        kindSelect.value === "csv"
          ? {
              kind: "csv",
              path: pathInput.value.trim(),
              schema_config: {
                targets: targetsInput.value
                  .split(",")
                  .map((t) => t.trim())
                  .filter((t) => t.length > 0),
              },
            }
          : { kind: "synthetic", seed },
      gamma: readNumber(gammaInput, 0.1),
      eta: readNumber(etaInput, 1.0),
      seed,
    };
    void controller.load(request);
  });

  mineLocation.addEventListener("click", () => void controller.mine("location"));
  mineSpread.addEventListener("click", () => void controller.mine("spread"));
  resetButton.addEventListener("click", () => void controller.reset());

  const handlers = {
    onAssimilate: (c: CandidatePayload) => void controller.accept(c),
    onDetails: (c: CandidatePayload) => void controller.details(c),
    onSkip: (c: CandidatePayload) => controller.skip(c),
  };

  store.subscribe((state) => {
    renderCandidates(candidatesRoot, state, handlers);
    renderDetail(detailRoot, state);
    renderHistory(historyRoot, state);
    renderStatus(statusRoot, state);
    const noSession = state.session === null;
    mineLocation.disabled = state.busy || noSession;
    mineSpread.disabled = state.busy || noSession;
    resetButton.disabled = state.busy || noSession;
  });
  store.update({});
}

if (typeof document !== "undefined" && document.getElementById("load-form") !== null) {
  bootstrap(document);
}
