import { describe, expect, it } from "vitest";

import { Store, initialState, visibleCandidates } from "../src/state.js";
import { makeCandidate, makeState } from "./fixtures.js";

describe("Store", () => {
  it("starts without a session and not busy", () => {
    const state = initialState();
    expect(state.session).toBeNull();
    expect(state.busy).toBe(false);
    expect(state.candidates).toEqual([]);
    expect(state.history).toEqual([]);
  });

  it("allows exactly one mutation at a time", () => {
    const store = new Store();
    expect(store.beginMutation()).toBe(true);
    expect(store.beginMutation()).toBe(false);
    store.endMutation();
    expect(store.beginMutation()).toBe(true);
  });

  it("clears the previous error when a mutation starts", () => {
    const store = new Store();
    store.update({ error: "earlier failure" });
    store.beginMutation();
    expect(store.get().error).toBeNull();
  });

  it("records the error that ended a mutation", () => {
    const store = new Store();
    store.beginMutation();
    store.endMutation("busy: writer lock held");
    expect(store.get().busy).toBe(false);
    expect(store.get().error).toBe("busy: writer lock held");
  });

  it("notifies subscribers and honours unsubscribe", () => {
    const store = new Store();
    const seen: number[] = [];
    const unsubscribe = store.subscribe((s) => seen.push(s.iteration));
    store.update({ iteration: 1 });
    store.update({ iteration: 2 });
    unsubscribe();
    store.update({ iteration: 3 });
    expect(seen).toEqual([1, 2]);
  });

  it("appends history entries in order", () => {
    const store = new Store();
    store.pushHistory({ iteration: 0, action: "loaded" });
    store.pushHistory({ iteration: 1, action: "accepted", kind: "location" });
    expect(store.get().history.map((h) => h.action)).toEqual(["loaded", "accepted"]);
  });
});

describe("visibleCandidates", () => {
  it("sorts by SI descending without touching the stored order", () => {
    const state = makeState({
      candidates: [makeCandidate("low", 2.5), makeCandidate("high", 9.75), makeCandidate("mid", 5.0)],
    });
    expect(visibleCandidates(state).map((c) => c.id)).toEqual(["high", "mid", "low"]);
    expect(state.candidates.map((c) => c.id)).toEqual(["low", "high", "mid"]);
  });

  it("hides skipped candidates", () => {
    const state = makeState({
      candidates: [makeCandidate("a", 3), makeCandidate("b", 2)],
      skipped: new Set(["a"]),
    });
    expect(visibleCandidates(state).map((c) => c.id)).toEqual(["b"]);
  });

  it("marks skips through the store", () => {
    const store = new Store();
    store.update({ candidates: [makeCandidate("a", 3), makeCandidate("b", 2)] });
    store.skip("b");
    expect(visibleCandidates(store.get()).map((c) => c.id)).toEqual(["a"]);
  });
});
