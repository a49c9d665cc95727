/** Detail panel for one candidate. Location patterns get a dot-and-interval
 * chart per target attribute; spread patterns additionally get the projection
 * direction and the model-vs-subgroup CDF curves. Everything drawn here comes
 * straight from the detail payload; missing optional fields degrade to a
 * warning instead of hiding the whole view.
 */

import { el, fmt, linearScale, svg, svgText } from "../dom.js";
import type { ViewState } from "../state.js";
import type { AttributeDetailPayload, PatternDetailPayload } from "../types.js";

const CHART_WIDTH = 440;
const ROW_HEIGHT = 28;
const NAME_GUTTER = 120;
const SI_GUTTER = 64;

function scoreStrip(detail: PatternDetailPayload): HTMLElement {
  const strip = el("div", "score-strip");
  const entries: Array<[string, string]> = [
    ["coverage", String(detail.coverage)],
    ["IC", fmt(detail.score.ic)],
    ["DL", fmt(detail.score.dl, 2)],
    ["SI", fmt(detail.score.si)],
  ];
  for (const [label, value] of entries) {
    const cell = el("div", "score-cell");
    cell.append(el("span", "score-label", label), el("span", "score-value", value));
    strip.append(cell);
  }
  return strip;
}

function attributeChart(attributes: AttributeDetailPayload[]): SVGElement {
  const rows = attributes.slice().sort((a, b) => b.si - a.si);
  const height = rows.length * ROW_HEIGHT + 24;
  const chart = svg("svg", {
    width: CHART_WIDTH,
    height,
    viewBox: `0 0 ${CHART_WIDTH} ${height}`,
    class: "attribute-chart",
  });

  let lo = Infinity;
  let hi = -Infinity;
  for (const row of rows) {
    lo = Math.min(lo, row.ci_low, row.observed_mean);
    hi = Math.max(hi, row.ci_high, row.observed_mean);
  }
  const x = linearScale(lo, hi, NAME_GUTTER, CHART_WIDTH - SI_GUTTER);

  rows.forEach((row, i) => {
    const y = i * ROW_HEIGHT + ROW_HEIGHT / 2;
    const group = svg("g", { class: "attribute-row" });
    group.setAttribute("data-name", row.name);
    group.append(svgText(4, y + 4, row.name, "attr-name"));
    group.append(
      svg("line", {
        x1: x(row.ci_low),
        x2: x(row.ci_high),
        y1: y,
        y2: y,
        class: "interval",
      }),
    );
    group.append(svg("circle", { cx: x(row.expected_mean), cy: y, r: 4, class: "expected" }));
    group.append(
      svg("rect", {
        x: x(row.observed_mean) - 3.5,
        y: y - 3.5,
        width: 7,
        height: 7,
        class: "observed",
      }),
    );
    group.append(svgText(CHART_WIDTH - SI_GUTTER + 8, y + 4, fmt(row.si, 2), "attr-si"));
    chart.append(group);
  });

  const axisY = rows.length * ROW_HEIGHT + 14;
  chart.append(svgText(NAME_GUTTER, axisY, fmt(lo, 2), "axis-label"));
  chart.append(svgText(CHART_WIDTH - SI_GUTTER - 36, axisY, fmt(hi, 2), "axis-label"));
  return chart;
}

function attributeLegend(): HTMLElement {
  const legend = el("p", "legend");
  legend.textContent =
    "dot: expected mean with its central interval under the current model; square: observed subgroup mean; right column: per-attribute SI";
  return legend;
}

/** Indices of the two largest-magnitude direction components. */
function winningPair(direction: number[]): [number, number] | null {
  if (direction.length < 2) {
    return null;
  }
  const order = direction
    .map((value, index) => ({ index, weight: Math.abs(value) }))
    .sort((a, b) => b.weight - a.weight);
  const first = order[0];
  const second = order[1];
  if (first === undefined || second === undefined) {
    return null;
  }
  return [first.index, second.index];
}

function directionPanel(detail: PatternDetailPayload, direction: number[]): HTMLElement {
  const panel = el("div", "direction-panel");
  panel.append(el("h3", undefined, "Projection direction"));

  const names = detail.attributes.map((a) => a.name);
  const nameOf = (i: number) => names[i] ?? `y${i}`;

  const pair = winningPair(direction);
  if (pair !== null) {
    const [i, j] = pair;
    const wi = direction[i] ?? 0;
    const wj = direction[j] ?? 0;
    panel.append(
      el("p", "hint", `strongest pair: ${nameOf(i)} vs ${nameOf(j)}`),
    );

    const size = 190;
    const c = size / 2;
    const r = c - 22;
    const plot = svg("svg", {
      width: size,
      height: size,
      viewBox: `0 0 ${size} ${size}`,
      class: "direction-plot",
    });
    plot.append(svg("circle", { cx: c, cy: c, r, class: "unit-circle" }));
    plot.append(svg("line", { x1: c - r, x2: c + r, y1: c, y2: c, class: "axis" }));
    plot.append(svg("line", { x1: c, x2: c, y1: c - r, y2: c + r, class: "axis" }));
    // the in-plane projection of a unit w has length at most one
    plot.append(
      svg("line", {
        x1: c,
        y1: c,
        x2: c + wi * r,
        y2: c - wj * r,
        class: "direction-arrow",
      }),
    );
    plot.append(svg("circle", { cx: c + wi * r, cy: c - wj * r, r: 4, class: "direction-tip" }));
    plot.append(svgText(c + r + 4, c + 4, nameOf(i), "axis-label"));
    plot.append(svgText(c - 8, c - r - 8, nameOf(j), "axis-label"));
    panel.append(plot);
  }

  const list = el("ul", "direction-components");
  direction.forEach((value, index) => {
    list.append(el("li", undefined, `${nameOf(index)}: ${fmt(value)}`));
  });
  panel.append(list);
  return panel;
}

function variancePanel(expected: number, observed: number): HTMLElement {
  const panel = el("div", "variance-panel");
  panel.append(el("h3", undefined, "Variance along the direction"));
  const ratio = expected > 0 ? observed / expected : NaN;
  panel.append(
    el(
      "p",
      undefined,
      `expected ${fmt(expected)}, observed ${fmt(observed)} (ratio ${fmt(ratio, 2)})`,
    ),
  );
  return panel;
}

function cdfChart(grid: number[], model: number[], subgroup: number[]): HTMLElement {
  const panel = el("div", "cdf-panel");
  panel.append(el("h3", undefined, "Projected CDF: model vs subgroup"));

  const width = CHART_WIDTH;
  const height = 190;
  const margin = { left: 46, right: 12, top: 8, bottom: 22 };
  const first = grid[0] ?? 0;
  const last = grid[grid.length - 1] ?? 1;
  const x = linearScale(first, last, margin.left, width - margin.right);
  const y = linearScale(0, 1, height - margin.bottom, margin.top);

  const chart = svg("svg", {
    width,
    height,
    viewBox: `0 0 ${width} ${height}`,
    class: "cdf-chart",
  });
  chart.append(
    svg("rect", {
      x: margin.left,
      y: margin.top,
      width: width - margin.left - margin.right,
      height: height - margin.top - margin.bottom,
      class: "plot-area",
    }),
  );

  const toPoints = (values: number[]): string =>
    grid.map((g, i) => `${x(g)},${y(values[i] ?? 0)}`).join(" ");
  chart.append(svg("polyline", { points: toPoints(model), class: "cdf-model", fill: "none" }));
  chart.append(
    svg("polyline", { points: toPoints(subgroup), class: "cdf-subgroup", fill: "none" }),
  );

  chart.append(svgText(margin.left - 6, y(0) + 4, "0", "axis-label"));
  chart.append(svgText(margin.left - 6, y(1) + 4, "1", "axis-label"));
  chart.append(svgText(x(first), height - 6, fmt(first, 2), "axis-label"));
  chart.append(svgText(x(last) - 30, height - 6, fmt(last, 2), "axis-label"));
  panel.append(chart);

  const legend = el("p", "legend");
  legend.textContent = "solid: model belief; dashed: empirical subgroup distribution";
  panel.append(legend);
  return panel;
}

export function renderDetail(root: HTMLElement, state: ViewState): void {
  root.replaceChildren();
  root.append(el("h2", undefined, "Pattern detail"));

  const detail = state.selected;
  if (detail === null) {
    root.append(el("p", "placeholder", "Select a candidate to inspect it here."));
    return;
  }

  const header = el("div", "detail-header");
  header.append(el("span", `kind-badge kind-${detail.kind}`, detail.kind));
  header.append(el("span", "pattern-text", detail.description));
  root.append(header);
  root.append(scoreStrip(detail));

  if (detail.attributes.length > 0) {
    root.append(attributeChart(detail.attributes));
    root.append(attributeLegend());
  }

  if (detail.kind === "spread") {
    const missing: string[] = [];
    if (detail.direction === null) missing.push("direction");
    if (detail.expected_variance === null) missing.push("expected_variance");
    if (detail.observed_variance === null) missing.push("observed_variance");
    if (detail.cdf_grid === null) missing.push("cdf_grid");
    if (detail.cdf_model === null) missing.push("cdf_model");
    if (detail.cdf_subgroup === null) missing.push("cdf_subgroup");
    if (missing.length > 0) {
      const warning = el("div", "warning");
      warning.setAttribute("role", "alert");
      warning.textContent = `Detail payload is missing ${missing.join(", ")}; showing the parts that arrived.`;
      root.append(warning);
    }

    if (detail.expected_variance !== null && detail.observed_variance !== null) {
      root.append(variancePanel(detail.expected_variance, detail.observed_variance));
    }
    if (detail.direction !== null) {
      root.append(directionPanel(detail, detail.direction));
    }
    if (detail.cdf_grid !== null && detail.cdf_model !== null && detail.cdf_subgroup !== null) {
      root.append(cdfChart(detail.cdf_grid, detail.cdf_model, detail.cdf_subgroup));
    }
  }
}
