/** Small DOM and SVG builders so renderers stay declarative. Text always goes
 * through textContent; candidate descriptions are data, never markup. */

const SVG_NS = "http://www.w3.org/2000/svg";

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

export function svg(tag: string, attrs: Record<string, string | number> = {}): SVGElement {
  const node = document.createElementNS(SVG_NS, tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, String(value));
  }
  return node;
}

export function svgText(x: number, y: number, text: string, cls?: string): SVGElement {
  const node = svg("text", { x, y });
  if (cls) {
    node.setAttribute("class", cls);
  }
  node.textContent = text;
  return node;
}

/** Compact numeric display: fixed precision in a readable range, scientific
 * outside it, never NaN styling surprises. */
export function fmt(value: number, digits = 3): string {
  if (!Number.isFinite(value)) {
    return String(value);
  }
  const magnitude = Math.abs(value);
  if (magnitude !== 0 && (magnitude >= 10_000 || magnitude < 0.001)) {
    return value.toExponential(2);
  }
  return value.toFixed(digits);
}

/** Maps a data interval onto pixel coordinates, padding degenerate spans. */
export function linearScale(
  lo: number,
  hi: number,
  pxLo: number,
  pxHi: number,
): (v: number) => number {
  let a = lo;
  let b = hi;
  if (!(b > a)) {
    a -= 1;
    b += 1;
  }
  return (v: number) => pxLo + ((v - a) / (b - a)) * (pxHi - pxLo);
}
