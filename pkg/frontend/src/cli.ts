// plot <fig-id> --in <csv> --out <file> [--format svg|png]

import { readFileSync, writeFileSync } from "fs";
import { pathToFileURL } from "url";
import { parseTraceCsv, SchemaError } from "./csv.js";
import { FIGURE_IDS, FigureId, renderFigure } from "./figures.js";

const USAGE =
  "usage: plot <fig2|fig3|fig4|fig5> --in <csv> --out <file> [--format svg|png]";

interface Args {
  figId: FigureId;
  input: string;
  output: string;
  format: string;
}

export function parseArgs(argv: string[]): Args {
  if (argv.length === 0) throw new Error(USAGE);
  const [figId, ...rest] = argv;
  if (!(FIGURE_IDS as readonly string[]).includes(figId)) {
    throw new Error(`unknown figure id "${figId}"\n${USAGE}`);
  }
  const options = new Map<string, string>();
  for (let i = 0; i < rest.length; i += 2) {
    const key = rest[i];
    const value = rest[i + 1];
    if (!key.startsWith("--") || value === undefined) throw new Error(USAGE);
    options.set(key.slice(2), value);
  }
  const input = options.get("in");
  const output = options.get("out");
  if (!input || !output) throw new Error(USAGE);
  const format = options.get("format") ?? "svg";
  if (format !== "svg" && format !== "png") {
    throw new Error(`unknown format "${format}"\n${USAGE}`);
  }
  if (format === "png") {
    throw new Error("png output is not supported in this build; use --format svg");
  }
  return { figId: figId as FigureId, input, output, format };
}

export function main(argv: string[]): number {
  let args: Args;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error((err as Error).message);
    return 1;
  }
  let text: string;
  try {
    text = readFileSync(args.input, "utf8");
  } catch (err) {
    console.error(`cannot read ${args.input}: ${(err as Error).message}`);
    return 1;
  }
  try {
    const rows = parseTraceCsv(text);
    writeFileSync(args.output, renderFigure(args.figId, rows));
  } catch (err) {
    if (err instanceof SchemaError) {
      console.error(`schema error: ${err.message}`);
    } else {
      console.error((err as Error).message);
    }
    return 1;
  }
  return 0;
}

if (process.argv[1] && import.meta.url === pathToFileURL(process.argv[1]).href) {
  process.exit(main(process.argv.slice(2)));
}
