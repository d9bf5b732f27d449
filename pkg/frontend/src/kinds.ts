/**
 * Figure kinds and the CSV schemas they consume.
 *
 * Each kind declares its required columns (checked column by column) and
 * maps one or more parsed tables to series + plot options. Kinds never
 * recompute science: they only rearrange columns.
 */

import { CsvError, Table, requireColumns } from "./csv.js";
import { PlotOptions, Series, fitLogLogSlope } from "./svg.js";

export interface Figure {
  series: Series[];
  options: PlotOptions;
}

export type KindBuilder = (tables: Table[], names: string[]) => Figure;

function baseName(path: string): string {
  const parts = path.split("/");
  return parts[parts.length - 1];
}

/** Log-log error plot with fitted slope annotations (two decimals). */
function convergence(tables: Table[], names: string[]): Figure {
  const t = tables[0];
  requireColumns(t, [t.columns[0]], names[0]);
  const xCol = t.columns[0];
  const yCols = t.columns.filter(
    (c) => c !== xCol && (c.startsWith("err") || c === "err" || tables.length > 0)
  );
  const errorCols = t.columns.filter((c) => c.startsWith("err"));
  const cols = errorCols.length > 0 ? errorCols : t.columns.slice(1, 2);
  if (cols.length === 0) {
    throw new CsvError(`${names[0]}: no error columns to plot`);
  }
  const x = t.data.get(xCol)!;
  const series = cols.map((c) => ({ label: c, x, y: t.data.get(c)! }));
  const annotations = series.map(
    (s) => `slope(${s.label}) = ${fitLogLogSlope(s.x, s.y).toFixed(2)}`
  );
  return {
    series,
    options: {
      title: `convergence - ${baseName(names[0])}`,
      xLabel: xCol,
      yLabel: "error",
      xLog: true,
      yLog: true,
      annotations,
    },
  };
}

/** Parametric horizontal-velocity spiral over depth, at the final time. */
function hodograph(tables: Table[], names: string[]): Figure {
  const t = tables[0];
  requireColumns(t, ["tau", "zeta", "re_u1", "re_u2"], names[0]);
  const tau = t.data.get("tau")!;
  const lastTau = tau[tau.length - 1];
  const pick = (col: string) =>
    t.data.get(col)!.filter((_, i) => tau[i] === lastTau);
  return {
    series: [{ label: `tau=${lastTau}`, x: pick("re_u1"), y: pick("re_u2") }],
    options: {
      title: `hodograph - ${baseName(names[0])}`,
      xLabel: "re_u1",
      yLabel: "re_u2",
    },
  };
}

/** Layer components against scaled depth, at the final time. */
function profile(tables: Table[], names: string[]): Figure {
  const t = tables[0];
  requireColumns(t, ["zeta", "re_u1", "im_u1", "re_u2", "im_u2"], names[0]);
  const tau = t.data.get("tau");
  const zeta = t.data.get("zeta")!;
  const mask = (i: number) =>
    tau === undefined || tau[i] === tau[tau.length - 1];
  const sel = zeta.map((_, i) => i).filter(mask);
  const series = ["re_u1", "im_u1", "re_u2", "im_u2"].map((c) => ({
    label: c,
    x: sel.map((i) => zeta[i]),
    y: sel.map((i) => t.data.get(c)![i]),
  }));
  return {
    series,
    options: {
      title: `layer profile - ${baseName(names[0])}`,
      xLabel: "zeta",
      yLabel: "velocity",
      markers: false,
    },
  };
}

/** Regularized spectral density curves over frequency. */
function spectrum(tables: Table[], names: string[]): Figure {
  const t = tables[0];
  requireColumns(t, ["lambda"], names[0]);
  const cols = t.columns.filter((c) => c !== "lambda");
  if (cols.length === 0) {
    throw new CsvError(`${names[0]}: no spectral columns besides 'lambda'`);
  }
  const lam = t.data.get("lambda")!;
  return {
    series: cols.map((c) => ({ label: c, x: lam, y: t.data.get(c)! })),
    options: {
      title: `spectrum - ${baseName(names[0])}`,
      xLabel: "lambda",
      yLabel: "|F_alpha|",
      yLog: true,
      markers: false,
    },
  };
}

/** Energy budget time series from a trajectory table. */
function energy(tables: Table[], names: string[]): Figure {
  const t = tables[0];
  requireColumns(
    t,
    ["time", "energy", "dissipation", "pumping", "source_work"],
    names[0]
  );
  const time = t.data.get("time")!;
  const cols = ["energy", "dissipation", "pumping", "source_work"];
  return {
    series: cols.map((c) => ({ label: c, x: time, y: t.data.get(c)! })),
    options: {
      title: `energy budget - ${baseName(names[0])}`,
      xLabel: "time",
      yLabel: "value",
      markers: false,
    },
  };
}

/** Overlay of one value column per file on shared axes. */
function overlay(tables: Table[], names: string[]): Figure {
  const series: Series[] = tables.map((t, i) => {
    const xCol = t.columns[0];
    const yCol = t.columns[1];
    if (yCol === undefined) {
      throw new CsvError(`${names[i]}: need at least two columns to overlay`);
    }
    return {
      label: `${baseName(names[i])}:${yCol}`,
      x: t.data.get(xCol)!,
      y: t.data.get(yCol)!,
    };
  });
  return {
    series,
    options: {
      title: "overlay",
      xLabel: tables[0].columns[0],
      yLabel: "value",
      markers: false,
    },
  };
}

export const KINDS: Record<string, KindBuilder> = {
  convergence,
  hodograph,
  profile,
  spectrum,
  energy,
  overlay,
};
