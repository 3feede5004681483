// Hand-rolled SVG line/scatter panels. No DOM, no randomness, fixed number
// formatting: re-rendering a file from the same input is byte identical.

export interface LineSeries {
  label: string;
  points: { x: number; mean: number; std: number }[];
  band: boolean;
}

export interface ScatterSeries {
  label: string;
  points: { x: number; y: number }[];
  meanTicks?: { x: number; y: number }[];
}

export interface Panel {
  title: string;
  xLabel: string;
  yLabel: string;
  lines?: LineSeries[];
  scatter?: ScatterSeries[];
}

export const PALETTE = [
  "#1f77b4",
  "#d62728",
  "#2ca02c",
  "#9467bd",
  "#ff7f0e",
  "#8c564b",
  "#17becf",
  "#7f7f7f",
];

const PANEL_W = 560;
const PANEL_H = 430;
const MARGIN = { left: 64, right: 18, top: 40, bottom: 78 };

function coord(value: number): string {
  const rounded = Math.round(value * 100) / 100;
  return (Object.is(rounded, -0) ? 0 : rounded).toString();
}

function tickLabel(value: number): string {
  if (Number.isInteger(value) && Math.abs(value) < 1e9) return value.toString();
  const text = value.toPrecision(4);
  return text.includes(".") ? text.replace(/\.?0+$/, "") : text;
}

function esc(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export function niceTicks(lo: number, hi: number, target = 5): number[] {
  if (!(hi > lo)) return [lo];
  const span = hi - lo;
  const rawStep = span / target;
  const power = Math.pow(10, Math.floor(Math.log10(rawStep)));
  let step = power;
  for (const mult of [1, 2, 5, 10]) {
    if (rawStep <= mult * power) {
      step = mult * power;
      break;
    }
  }
  const ticks: number[] = [];
  const start = Math.ceil(lo / step) * step;
  for (let v = start; v <= hi + 1e-9 * span; v += step) {
    ticks.push(Math.abs(v) < step * 1e-9 ? 0 : v);
  }
  return ticks;
}

interface Extent {
  lo: number;
  hi: number;
}

function padExtent(values: number[]): Extent {
  if (values.length === 0) return { lo: 0, hi: 1 };
  let lo = Math.min(...values);
  let hi = Math.max(...values);
  if (lo === hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  const pad = 0.05 * (hi - lo);
  return { lo: lo - pad, hi: hi + pad };
}

function renderPanel(panel: Panel, offsetX: number, colorOf: (label: string) => string): string {
  const innerW = PANEL_W - MARGIN.left - MARGIN.right;
  const innerH = PANEL_H - MARGIN.top - MARGIN.bottom;
  const xs: number[] = [];
  const ys: number[] = [];
  for (const series of panel.lines ?? []) {
    for (const p of series.points) {
      xs.push(p.x);
      ys.push(p.mean);
      if (series.band) {
        ys.push(p.mean - p.std, p.mean + p.std);
      }
    }
  }
  for (const series of panel.scatter ?? []) {
    for (const p of series.points) {
      xs.push(p.x);
      ys.push(p.y);
    }
  }
  const xExt = padExtent(xs);
  const yExt = padExtent(ys);
  const sx = (v: number) => MARGIN.left + ((v - xExt.lo) / (xExt.hi - xExt.lo)) * innerW;
  const sy = (v: number) => MARGIN.top + innerH - ((v - yExt.lo) / (yExt.hi - yExt.lo)) * innerH;

  const parts: string[] = [];
  parts.push(`<g transform="translate(${offsetX},0)">`);
  parts.push(
    `<rect x="${MARGIN.left}" y="${MARGIN.top}" width="${innerW}" height="${innerH}" ` +
      `fill="none" stroke="#333" stroke-width="1"/>`,
  );
  parts.push(
    `<text x="${coord(MARGIN.left + innerW / 2)}" y="22" text-anchor="middle" ` +
      `font-family="sans-serif" font-size="15" font-weight="bold">${esc(panel.title)}</text>`,
  );

  for (const tick of niceTicks(xExt.lo, xExt.hi)) {
    const x = sx(tick);
    parts.push(
      `<line x1="${coord(x)}" y1="${coord(MARGIN.top + innerH)}" x2="${coord(x)}" ` +
        `y2="${coord(MARGIN.top + innerH + 5)}" stroke="#333" stroke-width="1"/>`,
    );
    parts.push(
      `<text x="${coord(x)}" y="${coord(MARGIN.top + innerH + 20)}" text-anchor="middle" ` +
        `font-family="sans-serif" font-size="12">${tickLabel(tick)}</text>`,
    );
  }
  for (const tick of niceTicks(yExt.lo, yExt.hi)) {
    const y = sy(tick);
    parts.push(
      `<line x1="${coord(MARGIN.left - 5)}" y1="${coord(y)}" x2="${coord(MARGIN.left)}" ` +
        `y2="${coord(y)}" stroke="#333" stroke-width="1"/>`,
    );
    parts.push(
      `<text x="${coord(MARGIN.left - 9)}" y="${coord(y + 4)}" text-anchor="end" ` +
        `font-family="sans-serif" font-size="12">${tickLabel(tick)}</text>`,
    );
  }
  parts.push(
    `<text x="${coord(MARGIN.left + innerW / 2)}" y="${coord(PANEL_H - 42)}" ` +
      `text-anchor="middle" font-family="sans-serif" font-size="13">${esc(panel.xLabel)}</text>`,
  );
  parts.push(
    `<text x="16" y="${coord(MARGIN.top + innerH / 2)}" text-anchor="middle" ` +
      `font-family="sans-serif" font-size="13" ` +
      `transform="rotate(-90 16 ${coord(MARGIN.top + innerH / 2)})">${esc(panel.yLabel)}</text>`,
  );

  const hasData = xs.length > 0;
  if (!hasData) {
    parts.push(
      `<text x="${coord(MARGIN.left + innerW / 2)}" y="${coord(MARGIN.top + innerH / 2)}" ` +
        `text-anchor="middle" font-family="sans-serif" font-size="13" fill="#777">no data</text>`,
    );
  }

  for (const series of panel.lines ?? []) {
    if (series.points.length === 0) continue;
    const color = colorOf(series.label);
    if (series.band && series.points.length > 1) {
      const upper = series.points.map((p) => `${coord(sx(p.x))},${coord(sy(p.mean + p.std))}`);
      const lower = [...series.points]
        .reverse()
        .map((p) => `${coord(sx(p.x))},${coord(sy(p.mean - p.std))}`);
      parts.push(
        `<polygon points="${upper.concat(lower).join(" ")}" fill="${color}" ` +
          `fill-opacity="0.15" stroke="none"/>`,
      );
    }
    const path = series.points
      .map((p, i) => `${i === 0 ? "M" : "L"}${coord(sx(p.x))} ${coord(sy(p.mean))}`)
      .join(" ");
    parts.push(`<path d="${path}" fill="none" stroke="${color}" stroke-width="1.8"/>`);
    for (const p of series.points) {
      parts.push(
        `<circle cx="${coord(sx(p.x))}" cy="${coord(sy(p.mean))}" r="2.5" fill="${color}"/>`,
      );
    }
  }

  for (const series of panel.scatter ?? []) {
    const color = colorOf(series.label);
    for (const p of series.points) {
      parts.push(
        `<circle cx="${coord(sx(p.x))}" cy="${coord(sy(p.y))}" r="2.5" fill="${color}" ` +
          `fill-opacity="0.55"/>`,
      );
    }
    for (const tick of series.meanTicks ?? []) {
      parts.push(
        `<line x1="${coord(sx(tick.x) - 9)}" y1="${coord(sy(tick.y))}" ` +
          `x2="${coord(sx(tick.x) + 9)}" y2="${coord(sy(tick.y))}" ` +
          `stroke="${color}" stroke-width="2.5"/>`,
      );
    }
  }

  // legend under the axis, one entry per series in draw order
  const labels = [
    ...(panel.lines ?? []).map((s) => s.label),
    ...(panel.scatter ?? []).map((s) => s.label),
  ];
  labels.forEach((label, i) => {
    const col = i % 2;
    const row = Math.floor(i / 2);
    const x = MARGIN.left + col * (innerW / 2);
    const y = PANEL_H - 24 + row * 16;
    parts.push(
      `<line x1="${coord(x)}" y1="${coord(y - 4)}" x2="${coord(x + 18)}" y2="${coord(y - 4)}" ` +
        `stroke="${colorOf(label)}" stroke-width="2.5"/>`,
    );
    parts.push(
      `<text x="${coord(x + 24)}" y="${coord(y)}" font-family="sans-serif" ` +
        `font-size="12">${esc(label)}</text>`,
    );
  });

  parts.push("</g>");
  return parts.join("\n");
}

export function renderFigureSvg(panels: Panel[]): string {
  const labels = new Set<string>();
  for (const panel of panels) {
    for (const s of panel.lines ?? []) labels.add(s.label);
    for (const s of panel.scatter ?? []) labels.add(s.label);
  }
  const ordered = [...labels].sort();
  const colorOf = (label: string) => PALETTE[ordered.indexOf(label) % PALETTE.length];
  const width = PANEL_W * panels.length;
  const body = panels.map((panel, i) => renderPanel(panel, i * PANEL_W, colorOf)).join("\n");
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${PANEL_H}" ` +
    `viewBox="0 0 ${width} ${PANEL_H}">\n<rect width="${width}" height="${PANEL_H}" ` +
    `fill="white"/>\n${body}\n</svg>\n`
  );
}
