/** Hand-built payloads for renderer and store tests. Values are arbitrary but
 * shaped exactly like the service responses. */

import { initialState } from "../src/state.js";
import type { ViewState } from "../src/state.js";
import type { CandidatePayload, PatternDetailPayload } from "../src/types.js";

export function makeCandidate(
  id: string,
  si: number,
  overrides: Partial<CandidatePayload> = {},
): CandidatePayload {
  return {
    id,
    kind: "location",
    pattern: {
      kind: "location",
      conditions: [{ attribute: "a1", op: "==", value: "1" }],
      indices: [0, 3, 5],
      mean: [0.4, -0.2],
    },
    score: { ic: si * 1.1, dl: 1.1, si },
    depth: 1,
    description: `a1 == '1' (#${id})`,
    coverage: 3,
    ...overrides,
  };
}

export function makeLocationDetail(
  overrides: Partial<PatternDetailPayload> = {},
): PatternDetailPayload {
  return {
    id: "loc-1",
    kind: "location",
    description: "a1 == '1'",
    coverage: 120,
    score: { ic: 64.2, dl: 1.1, si: 58.4 },
    attributes: [
      {
        name: "reading",
        expected_mean: 0.1,
        ci_low: -0.15,
        ci_high: 0.35,
        observed_mean: 0.9,
        si: 40.2,
      },
      {
        name: "writing",
        expected_mean: -0.05,
        ci_low: -0.3,
        ci_high: 0.2,
        observed_mean: 0.7,
        si: 18.2,
      },
    ],
    direction: null,
    expected_variance: null,
    observed_variance: null,
    cdf_grid: null,
    cdf_model: null,
    cdf_subgroup: null,
    ...overrides,
  };
}

export function makeSpreadDetail(
  overrides: Partial<PatternDetailPayload> = {},
): PatternDetailPayload {
  const grid = Array.from({ length: 201 }, (_, i) => -4 + (8 * i) / 200);
  const cdf = (shift: number, scale: number) =>
    grid.map((g) => 1 / (1 + Math.exp(-(g - shift) / scale)));
  return {
    id: "spr-1",
    kind: "spread",
    description: "a1 == '1'",
    coverage: 120,
    score: { ic: 21.0, dl: 2.1, si: 10.0 },
    attributes: [
      {
        name: "reading",
        expected_mean: 0.1,
        ci_low: -0.15,
        ci_high: 0.35,
        observed_mean: 0.2,
        si: 4.0,
      },
      {
        name: "writing",
        expected_mean: -0.05,
        ci_low: -0.3,
        ci_high: 0.2,
        observed_mean: 0.1,
        si: 9.1,
      },
    ],
    direction: [0.31, -0.95],
    expected_variance: 1.0,
    observed_variance: 2.6,
    cdf_grid: grid,
    cdf_model: cdf(0, 1),
    cdf_subgroup: cdf(0, 1.6),
    ...overrides,
  };
}

export function makeState(overrides: Partial<ViewState> = {}): ViewState {
  return {
    ...initialState(),
    session: { id: "s1", iteration: 0, n: 620, d_y: 2, target_names: ["reading", "writing"] },
    ...overrides,
  };
}
