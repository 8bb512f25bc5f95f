/**
 * Pure figure model: everything about a log-log convergence figure as
 * plain numbers (screen coordinates of points, series, axis ticks, and
 * reference-slope guides).  Rendering to SVG is a separate, equally pure
 * step, which keeps the geometry testable without parsing markup.
 */

import { CsvDataError, CsvSchemaError, num, Table } from "./csv.js";

export type XAxis = "H" | "dofs" | "tau";

export interface SeriesModel {
  label: string;
  /** screen coordinates, ordered by decreasing step size */
  points: { x: number; y: number }[];
}

export interface GuideModel {
  order: number;
  /** screen-space endpoints of the slope guide */
  x1: number;
  y1: number;
  x2: number;
  y2: number;
  /** screen slope dy/dx, for collinearity checks */
  slope: number;
}

export interface Tick {
  pos: number;
  label: string;
}

export interface FigureModel {
  width: number;
  height: number;
  margin: { left: number; right: number; top: number; bottom: number };
  xLabel: string;
  yLabel: string;
  series: SeriesModel[];
  guides: GuideModel[];
  xTicks: Tick[];
  yTicks: Tick[];
}

const WIDTH = 560;
const HEIGHT = 420;
const MARGIN = { left: 70, right: 20, top: 20, bottom: 50 };

/** Error columns a figure can be built from, in preference order. */
export const NORM_COLUMNS = ["a_err_rel", "l2_err_rel", "err_rel",
  "fem_a_err_rel", "lod_a_err_rel"] as const;

function seriesColumn(table: Table): string | null {
  if (table.columns.includes("p")) return "p";
  if (table.columns.includes("theta")) return "theta";
  return null;
}

function log10(v: number): number {
  if (v <= 0) throw new CsvDataError(`log-log plot needs positive values, got ${v}`);
  return Math.log(v) / Math.LN10;
}

/**
 * Convergence order represented by a slope guide on this x-axis.  Errors
 * scale like H^s and tau^s directly; the number of unknowns grows like
 * H^-2 in two dimensions, so order s appears as slope -s/2 against dofs.
 */
export function guideSlope(order: number, x: XAxis): number {
  return x === "dofs" ? -order / 2 : order;
}

export function buildFigure(table: Table, x: XAxis, normColumn: string): FigureModel {
  if (!table.columns.includes(x)) {
    throw new CsvSchemaError(`CSV has no '${x}' column`);
  }
  if (!table.columns.includes(normColumn)) {
    throw new CsvSchemaError(`CSV has no '${normColumn}' column`);
  }
  const sCol = seriesColumn(table);

  const groups = new Map<string, { lx: number; ly: number }[]>();
  for (const row of table.rows) {
    const xv = num(row, x);
    const yv = num(row, normColumn);
    if (xv === null || yv === null) continue;
    const key = sCol === null ? "" : `${sCol}=${row[sCol]}`;
    if (!groups.has(key)) groups.set(key, []);
    groups.get(key)!.push({ lx: log10(xv), ly: log10(yv) });
  }
  if (groups.size === 0) throw new CsvDataError("no plottable rows");

  const all = [...groups.values()].flat();
  const lx = all.map((p) => p.lx);
  const ly = all.map((p) => p.ly);
  const pad = 0.15;
  const xr = expand(Math.min(...lx), Math.max(...lx), pad);
  const yr = expand(Math.min(...ly), Math.max(...ly), pad);

  const plotW = WIDTH - MARGIN.left - MARGIN.right;
  const plotH = HEIGHT - MARGIN.top - MARGIN.bottom;
  const sx = (v: number) => MARGIN.left + ((v - xr[0]) / (xr[1] - xr[0])) * plotW;
  const sy = (v: number) => MARGIN.top + ((yr[1] - v) / (yr[1] - yr[0])) * plotH;

  const series: SeriesModel[] = [...groups.entries()]
    .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
    .map(([label, pts]) => ({
      label,
      points: pts
        .slice()
        .sort((a, b) => a.lx - b.lx)
        .map((p) => ({ x: sx(p.lx), y: sy(p.ly) })),
    }));

  // anchor each guide at the lower-right data corner
  const guides: GuideModel[] = [2, 3, 4].map((order) => {
    const s = guideSlope(order, x);
    const span = 0.35 * (xr[1] - xr[0]);
    const lx1 = xr[0] + 0.55 * (xr[1] - xr[0]);
    const lx2 = lx1 + span;
    const anchor = Math.min(...ly) - 0.05 * (yr[1] - yr[0]);
    // slope s in data space: ly = anchor + s * (lx - lxRef)
    const lxRef = s > 0 ? lx1 : lx2;
    const g = {
      order,
      x1: sx(lx1),
      y1: sy(anchor + s * (lx1 - lxRef)),
      x2: sx(lx2),
      y2: sy(anchor + s * (lx2 - lxRef)),
      slope: 0,
    };
    g.slope = (g.y2 - g.y1) / (g.x2 - g.x1);
    return g;
  });

  return {
    width: WIDTH,
    height: HEIGHT,
    margin: MARGIN,
    xLabel: x,
    yLabel: normColumn,
    series,
    guides,
    xTicks: ticks(xr, sx),
    yTicks: ticks(yr, sy),
  };
}

function expand(lo: number, hi: number, pad: number): [number, number] {
  const span = hi - lo || 1;
  return [lo - pad * span, hi + pad * span];
}

function ticks(range: [number, number], scale: (v: number) => number): Tick[] {
  const out: Tick[] = [];
  for (let e = Math.ceil(range[0]); e <= Math.floor(range[1]); e++) {
    out.push({ pos: scale(e), label: `1e${e}` });
  }
  if (out.length === 0) {
    const mid = (range[0] + range[1]) / 2;
    out.push({ pos: scale(mid), label: mid.toPrecision(3) });
  }
  return out;
}

/** Least-squares diagnostics of a point set, for collinearity checks. */
export function lineFit(points: { x: number; y: number }[]): { slope: number; r2: number } {
  const n = points.length;
  const mx = points.reduce((s, p) => s + p.x, 0) / n;
  const my = points.reduce((s, p) => s + p.y, 0) / n;
  let sxx = 0;
  let sxy = 0;
  let syy = 0;
  for (const p of points) {
    sxx += (p.x - mx) ** 2;
    sxy += (p.x - mx) * (p.y - my);
    syy += (p.y - my) ** 2;
  }
  const slope = sxy / sxx;
  const r2 = syy === 0 ? 1 : (sxy * sxy) / (sxx * syy);
  return { slope, r2 };
}
