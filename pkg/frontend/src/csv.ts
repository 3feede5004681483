// Reader for the experiment export tables. The exporter never quotes fields
// and never emits commas inside values, so a straight split is exact.

export interface TraceRow {
  experiment: string;
  policy: string;
  sweepParam: string;
  sweepValue: number | null;
  repetition: number;
  t: number;
  instRegret: number;
  cumRegret: number;
  lambda0Hat: number | null;
  deltaPiHat: number | null;
  betaErr: number | null;
  coverage: number | null;
}

export const REQUIRED_COLUMNS = [
  "experiment",
  "policy",
  "sweep_param",
  "sweep_value",
  "repetition",
  "t",
  "inst_regret",
  "cum_regret",
  "lambda0_hat",
  "delta_pi_hat",
  "beta_err",
  "coverage",
] as const;

export class SchemaError extends Error {}

function numeric(raw: string, column: string, line: number): number {
  const value = Number(raw);
  if (raw === "" || Number.isNaN(value)) {
    throw new SchemaError(`line ${line}: column ${column} is not numeric: "${raw}"`);
  }
  return value;
}

function optionalNumeric(raw: string, column: string, line: number): number | null {
  return raw === "" ? null : numeric(raw, column, line);
}

export function parseTraceCsv(text: string): TraceRow[] {
  const lines = text.split(/\r?\n/).filter((line) => line.length > 0);
  if (lines.length === 0) {
    throw new SchemaError("empty file: expected a header row");
  }
  const header = lines[0].split(",");
  const index = new Map<string, number>();
  header.forEach((name, i) => index.set(name, i));
  for (const column of REQUIRED_COLUMNS) {
    if (!index.has(column)) {
      throw new SchemaError(`missing column: ${column}`);
    }
  }
  const pick = (cells: string[], column: string) => cells[index.get(column)!] ?? "";
  const rows: TraceRow[] = [];
  for (let i = 1; i < lines.length; i++) {
    const cells = lines[i].split(",");
    if (cells.length !== header.length) {
      throw new SchemaError(`line ${i + 1}: expected ${header.length} cells, got ${cells.length}`);
    }
    rows.push({
      experiment: pick(cells, "experiment"),
      policy: pick(cells, "policy"),
      sweepParam: pick(cells, "sweep_param"),
      sweepValue: optionalNumeric(pick(cells, "sweep_value"), "sweep_value", i + 1),
      repetition: numeric(pick(cells, "repetition"), "repetition", i + 1),
      t: numeric(pick(cells, "t"), "t", i + 1),
      instRegret: numeric(pick(cells, "inst_regret"), "inst_regret", i + 1),
      cumRegret: numeric(pick(cells, "cum_regret"), "cum_regret", i + 1),
      lambda0Hat: optionalNumeric(pick(cells, "lambda0_hat"), "lambda0_hat", i + 1),
      deltaPiHat: optionalNumeric(pick(cells, "delta_pi_hat"), "delta_pi_hat", i + 1),
      betaErr: optionalNumeric(pick(cells, "beta_err"), "beta_err", i + 1),
      coverage: optionalNumeric(pick(cells, "coverage"), "coverage", i + 1),
    });
  }
  return rows;
}
