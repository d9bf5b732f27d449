/**
 * CLI: render a rotwind CSV artifact to a deterministic SVG figure.
 *
 *   node dist/render.js --in compare.csv --out compare.svg --kind convergence
 *
 * `--in` accepts a comma-separated list for overlay figures. Schema
 * mismatches are reported column by column on stderr with exit code 2.
 */

import { readFileSync, writeFileSync } from "fs";
import { CsvError, parseCsv } from "./csv.js";
import { KINDS } from "./kinds.js";
import { renderPlot } from "./svg.js";

export function renderFigure(kind: string, paths: string[]): string {
  const builder = KINDS[kind];
  if (!builder) {
    throw new CsvError(
      `unknown figure kind '${kind}' (have: ${Object.keys(KINDS).sort().join(", ")})`
    );
  }
  const tables = paths.map((p) => parseCsv(readFileSync(p, "utf-8"), p));
  const fig = builder(tables, paths);
  return renderPlot(fig.series, fig.options);
}

function parseArgs(argv: string[]): { input: string[]; out: string; kind: string } {
  const args = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    if (!argv[i].startsWith("--") || argv[i + 1] === undefined) {
      throw new CsvError(`bad argument list near '${argv[i]}'`);
    }
    args.set(argv[i].slice(2), argv[i + 1]);
  }
  const input = args.get("in");
  const out = args.get("out");
  const kind = args.get("kind");
  if (!input || !out || !kind) {
    throw new CsvError("usage: render --in a.csv[,b.csv] --out fig.svg --kind <kind>");
  }
  return { input: input.split(","), out, kind };
}

export function main(argv: string[]): number {
  try {
    const { input, out, kind } = parseArgs(argv);
    const svg = renderFigure(kind, input);
    writeFileSync(out, svg);
    console.log(`wrote ${out}`);
    return 0;
  } catch (err) {
    if (err instanceof CsvError) {
      console.error(String(err.message));
      return 2;
    }
    console.error(String(err));
    return 1;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url.endsWith(process.argv[1].split("/").pop() ?? "");
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
