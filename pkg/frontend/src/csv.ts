/**
 * Reader for the versioned CSV tables written by the experiment harness.
 *
 * The contract is deliberately narrow: a `# wavelod-csv v1` comment line,
 * then a header row, then data rows.  Anything else is rejected loudly so
 * schema drift between the two packages cannot pass silently.
 */

export const SCHEMA_LINE = "# wavelod-csv v1";

export class CsvSchemaError extends Error {}
export class CsvDataError extends Error {}

export interface Table {
  columns: string[];
  rows: Record<string, string>[];
}

export function parseCsv(text: string): Table {
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  if (lines.length === 0 || !lines[0].startsWith("# wavelod-csv")) {
    throw new CsvSchemaError("missing CSV schema version line");
  }
  if (lines[0] !== SCHEMA_LINE) {
    throw new CsvSchemaError(`unsupported CSV schema: ${lines[0]}`);
  }
  if (lines.length < 2) {
    throw new CsvDataError("CSV has no header row");
  }
  const columns = lines[1].split(",");
  const rows = lines.slice(2).map((line) => {
    const cells = line.split(",");
    if (cells.length !== columns.length) {
      throw new CsvDataError(`row has ${cells.length} cells, expected ${columns.length}`);
    }
    return Object.fromEntries(columns.map((c, i) => [c, cells[i]]));
  });
  if (rows.length === 0) {
    throw new CsvDataError("CSV contains no data rows");
  }
  return { columns, rows };
}

/** Numeric cell access; blank cells (e.g. first-row EOC) come back as null. */
export function num(row: Record<string, string>, column: string): number | null {
  const raw = row[column];
  if (raw === undefined) throw new CsvSchemaError(`missing column ${column}`);
  if (raw === "") return null;
  const v = Number(raw);
  if (!Number.isFinite(v)) throw new CsvDataError(`non-numeric cell '${raw}' in ${column}`);
  return v;
}
