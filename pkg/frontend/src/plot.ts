/**
 * File-level plotting entry: read one harness CSV, emit one log-log SVG
 * figure per error-norm column it contains.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { parseCsv, Table } from "./csv.js";
import { buildFigure, NORM_COLUMNS, XAxis } from "./model.js";
import { renderSvg } from "./svg.js";

export function availableNorms(table: Table): string[] {
  return NORM_COLUMNS.filter((c) => table.columns.includes(c));
}

export function plotConvergence(csvPath: string, x: XAxis, outDir: string): string[] {
  const table = parseCsv(fs.readFileSync(csvPath, "utf8"));
  const norms = availableNorms(table);
  if (norms.length === 0) {
    throw new Error(`CSV has no recognized error columns (${NORM_COLUMNS.join(", ")})`);
  }
  fs.mkdirSync(outDir, { recursive: true });
  const stem = path.basename(csvPath).replace(/\.csv$/, "");
  const written: string[] = [];
  for (const norm of norms) {
    const svg = renderSvg(buildFigure(table, x, norm));
    const file = path.join(outDir, `${stem}_${norm}_vs_${x}.svg`);
    fs.writeFileSync(file, svg);
    written.push(file);
  }
  return written;
}
