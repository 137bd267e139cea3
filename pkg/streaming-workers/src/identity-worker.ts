/**
 * Identity worker: echoes every record line unchanged. Exit 0 on success;
 * nothing but protocol lines ever goes to stdout.
 */

import { readLines, writeLine } from "./lines";

async function main(): Promise<number> {
  for await (const line of readLines(process.stdin)) {
    writeLine(line);
  }
  return 0;
}

main().then(
  (code) => process.exit(code),
  (err) => {
    process.stderr.write(`identity-worker: ${err}\n`);
    process.exit(1);
  },
);
