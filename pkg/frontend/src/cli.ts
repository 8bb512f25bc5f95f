#!/usr/bin/env node
/**
 * wavelod-plot plot --csv <path> --x {H|dofs|tau} --out <dir>
 */

import { parseArgs } from "node:util";

import { plotConvergence } from "./plot.js";
import { XAxis } from "./model.js";

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  if (command !== "plot") {
    process.stderr.write("usage: wavelod-plot plot --csv <path> --x {H|dofs|tau} --out <dir>\n");
    return 2;
  }
  let values;
  try {
    ({ values } = parseArgs({
      args: rest,
      options: {
        csv: { type: "string" },
        x: { type: "string" },
        out: { type: "string" },
      },
    }));
  } catch (err) {
    process.stderr.write(`error: ${(err as Error).message}\n`);
    return 2;
  }
  const { csv, x, out } = values;
  if (!csv || !out || !x || !["H", "dofs", "tau"].includes(x)) {
    process.stderr.write("error: need --csv <path>, --x {H|dofs|tau}, --out <dir>\n");
    return 2;
  }
  try {
    const files = plotConvergence(csv, x as XAxis, out);
    for (const f of files) process.stdout.write(`wrote ${f}\n`);
  } catch (err) {
    process.stderr.write(`error: ${(err as Error).message}\n`);
    return 1;
  }
  return 0;
}

const entry = process.argv[1] ?? "";
if (entry.endsWith("cli.js") || entry.endsWith("cli.ts")) {
  process.exit(main(process.argv.slice(2)));
}
