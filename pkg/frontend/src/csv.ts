/**
 * Strict reader for rotwind CSV artifacts.
 *
 * Layout: an optional `# schema=...` comment line, a header row, then
 * numeric rows. Parsing is intentionally unforgiving: these files are
 * machine-written, so any surprise is an input error worth reporting.
 */

export interface Table {
  /** value of the schema comment, "" when absent */
  schema: string;
  columns: string[];
  /** column-major numeric data */
  data: Map<string, number[]>;
  rows: number;
}

export class CsvError extends Error {}

export function parseCsv(text: string, name = "<csv>"): Table {
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  let schema = "";
  let start = 0;
  if (lines.length > 0 && lines[0].startsWith("#")) {
    schema = lines[0].slice(1).trim();
    start = 1;
  }
  if (lines.length <= start) {
    throw new CsvError(`${name}: no header row`);
  }
  const columns = lines[start].split(",").map((c) => c.trim());
  const body = lines.slice(start + 1);
  if (body.length === 0) {
    throw new CsvError(`${name}: no data rows (empty table)`);
  }
  const data = new Map<string, number[]>(columns.map((c) => [c, []]));
  body.forEach((line, i) => {
    const cells = line.split(",");
    if (cells.length !== columns.length) {
      throw new CsvError(
        `${name}: row ${i + 1} has ${cells.length} cells, expected ${columns.length}`
      );
    }
    cells.forEach((cell, j) => {
      const v = Number(cell);
      if (!Number.isFinite(v)) {
        throw new CsvError(
          `${name}: row ${i + 1}, column '${columns[j]}': not a number: '${cell}'`
        );
      }
      data.get(columns[j])!.push(v);
    });
  });
  return { schema, columns, data, rows: body.length };
}

/** Check that every required column exists; report all misses at once. */
export function requireColumns(table: Table, required: string[], name: string): void {
  const missing = required.filter((c) => !table.columns.includes(c));
  if (missing.length > 0) {
    const lines = missing.map((c) => `  missing column: ${c}`).join("\n");
    throw new CsvError(
      `${name}: schema mismatch (have: ${table.columns.join(", ")})\n${lines}`
    );
  }
}
