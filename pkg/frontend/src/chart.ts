// Hand-rolled SVG bandwidth chart: one polyline per scenario, log2 x axis
// (message size), linear y axis (bandwidth).

import type { BenchCurveView } from "./types.js";

const WIDTH = 560;
const HEIGHT = 300;
const MARGIN = { top: 16, right: 16, bottom: 40, left: 64 };
const SERIES_CLASSES = ["series-a", "series-b", "series-c"];

const SVG_NS = "http://www.w3.org/2000/svg";

function svgEl(
  tag: string,
  attrs: Record<string, string> = {},
  text?: string,
): SVGElement {
  const node = document.createElementNS(SVG_NS, tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  if (text !== undefined) node.textContent = text;
  return node as SVGElement;
}

export function bandwidthChart(curves: BenchCurveView[]): SVGElement {
  const chart = svgEl("svg", {
    viewBox: `0 0 ${WIDTH} ${HEIGHT}`,
    width: String(WIDTH),
    height: String(HEIGHT),
    class: "bench-chart",
    role: "img",
  });
  const points = curves.flatMap((c) => c.points);
  if (points.length === 0) return chart;

  const xs = points.map((p) => Math.log2(Math.max(1, p.size_bytes)));
  const ys = points.map((p) => p.bandwidth_Bps);
  const xMin = Math.min(...xs);
  const xMax = Math.max(...xs, xMin + 1);
  const yMax = Math.max(...ys, 1);

  const plotW = WIDTH - MARGIN.left - MARGIN.right;
  const plotH = HEIGHT - MARGIN.top - MARGIN.bottom;
  const toX = (size: number) =>
    MARGIN.left +
    ((Math.log2(Math.max(1, size)) - xMin) / (xMax - xMin)) * plotW;
  const toY = (bw: number) => MARGIN.top + (1 - bw / yMax) * plotH;

  // axes
  chart.append(
    svgEl("line", {
      x1: String(MARGIN.left),
      y1: String(MARGIN.top + plotH),
      x2: String(MARGIN.left + plotW),
      y2: String(MARGIN.top + plotH),
      class: "axis",
    }),
    svgEl("line", {
      x1: String(MARGIN.left),
      y1: String(MARGIN.top),
      x2: String(MARGIN.left),
      y2: String(MARGIN.top + plotH),
      class: "axis",
    }),
  );
  const sizes = [...new Set(points.map((p) => p.size_bytes))].sort(
    (a, b) => a - b,
  );
  for (const size of sizes) {
    chart.append(
      svgEl(
        "text",
        {
          x: String(toX(size)),
          y: String(MARGIN.top + plotH + 16),
          class: "tick",
          "text-anchor": "middle",
        },
        size >= 1024 ? `${size / 1024}k` : String(size),
      ),
    );
  }
  chart.append(
    svgEl(
      "text",
      {
        x: String(MARGIN.left - 8),
        y: String(MARGIN.top + 8),
        class: "tick",
        "text-anchor": "end",
      },
      `${(yMax / 1e6).toFixed(1)} MB/s`,
    ),
  );

  curves.forEach((curve, i) => {
    const sorted = [...curve.points].sort((a, b) => a.size_bytes - b.size_bytes);
    const coords = sorted
      .map((p) => `${toX(p.size_bytes).toFixed(1)},${toY(p.bandwidth_Bps).toFixed(1)}`)
      .join(" ");
    const cls = SERIES_CLASSES[i % SERIES_CLASSES.length];
    chart.append(
      svgEl("polyline", {
        points: coords,
        class: `series ${cls}`,
        fill: "none",
        "data-scenario": curve.scenario,
      }),
    );
    for (const p of sorted) {
      chart.append(
        svgEl("circle", {
          cx: toX(p.size_bytes).toFixed(1),
          cy: toY(p.bandwidth_Bps).toFixed(1),
          r: "3",
          class: `marker ${cls}`,
        }),
      );
    }
    chart.append(
      svgEl(
        "text",
        {
          x: String(MARGIN.left + 8),
          y: String(MARGIN.top + 16 + i * 16),
          class: `legend ${cls}`,
        },
        curve.scenario,
      ),
    );
  });
  return chart;
}
