import { SchemaError, TraceRow } from "./csv.js";
import { diagnosticBands, finalRegretBands, finalRegrets, regretCurves } from "./stats.js";
import { LineSeries, Panel, renderFigureSvg, ScatterSeries } from "./svg.js";

export const FIGURE_IDS = ["fig2", "fig3", "fig4", "fig5"] as const;
export type FigureId = (typeof FIGURE_IDS)[number];

function sweepName(rows: TraceRow[], fallback: string): string {
  for (const row of rows) {
    if (row.sweepParam !== "") return row.sweepParam;
  }
  return fallback;
}

function curveSeries(rows: TraceRow[], prefix: string): LineSeries[] {
  const curves = regretCurves(rows, (row) => `${prefix}=${row.sweepValue}`);
  return [...curves.entries()].map(([label, points]) => ({ label, points, band: true }));
}

function finalSeriesPerPolicy(rows: TraceRow[]): LineSeries[] {
  return [...finalRegretBands(rows).entries()].map(([policy, points]) => ({
    label: policy,
    points,
    band: true,
  }));
}

function finalScatter(rows: TraceRow[], label: string): ScatterSeries {
  const points: { x: number; y: number }[] = [];
  const meanTicks: { x: number; y: number }[] = [];
  for (const [, bySweep] of finalRegrets(rows)) {
    for (const [sweep, values] of [...bySweep.entries()].sort((a, b) => a[0] - b[0])) {
      const width = values.length > 1 ? 0.35 : 0;
      values.forEach((value, i) => {
        const offset = values.length > 1 ? (i / (values.length - 1) - 0.5) * width : 0;
        points.push({ x: sweep + offset, y: value });
      });
      meanTicks.push({ x: sweep, y: values.reduce((a, v) => a + v, 0) / values.length });
    }
  }
  return { label, points, meanTicks };
}

export function buildPanels(figId: FigureId, rows: TraceRow[]): Panel[] {
  switch (figId) {
    case "fig2": {
      const sweep = sweepName(rows, "p_res");
      return [
        {
          title: "Cumulative regret over rounds",
          xLabel: "round t",
          yLabel: "cumulative regret",
          lines: curveSeries(rows, sweep),
        },
        {
          title: "Final regret by residual dimension",
          xLabel: sweep,
          yLabel: "final cumulative regret",
          scatter: [finalScatter(rows, "per-repetition final regret")],
        },
      ];
    }
    case "fig3": {
      const sweep = sweepName(rows, "p");
      return [
        {
          title: "Final regret versus feature dimension",
          xLabel: sweep,
          yLabel: "final cumulative regret",
          lines: finalSeriesPerPolicy(rows),
        },
      ];
    }
    case "fig4": {
      const sweep = sweepName(rows, "T0");
      return [
        {
          title: "Final regret versus offline sample size",
          xLabel: sweep,
          yLabel: "final cumulative regret",
          lines: finalSeriesPerPolicy(rows),
        },
      ];
    }
    case "fig5": {
      const sweep = sweepName(rows, "T0");
      const raw = diagnosticBands(rows, (row) => row.deltaPiHat);
      const scaled = diagnosticBands(
        rows,
        (row) => row.deltaPiHat,
        (value, sweepValue) => value * Math.sqrt(sweepValue),
      );
      if (rows.length > 0 && raw.length === 0) {
        throw new SchemaError("column delta_pi_hat carries no values for fig5");
      }
      return [
        {
          title: "Subspace projection error",
          xLabel: sweep,
          yLabel: "projection error",
          lines: [{ label: "projection error", points: raw, band: true }],
        },
        {
          title: "Scaled by sqrt(T0)",
          xLabel: sweep,
          yLabel: "projection error x sqrt(T0)",
          lines: [{ label: "scaled projection error", points: scaled, band: true }],
        },
      ];
    }
  }
}

export function renderFigure(figId: FigureId, rows: TraceRow[]): string {
  return renderFigureSvg(buildPanels(figId, rows));
}
