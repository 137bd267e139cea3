/**
 * Word-count reducer: input arrives grouped (identical adjacent keys), so a
 * key change marks a group boundary. Emits `word \t total` per group. Keys
 * are compared and re-emitted in their escaped wire form, leaving the
 * engine's canonical byte representation untouched. Malformed lines are
 * skipped with a note on stderr.
 */

import { readLines, writeLine } from "./lines";

async function main(): Promise<number> {
  let currentKey: string | null = null;
  let total = 0;

  const flush = () => {
    if (currentKey !== null) {
      writeLine(`${currentKey}\t${total}`);
    }
  };

  for await (const line of readLines(process.stdin)) {
    const sep = line.indexOf("\t");
    const key = sep < 0 ? line : line.slice(0, sep);
    const value = sep < 0 ? "" : line.slice(sep + 1);
    const count = parseInt(value, 10);
    if (Number.isNaN(count)) {
      process.stderr.write(`wordcount-reducer: skipping malformed line\n`);
      continue;
    }
    if (key !== currentKey) {
      flush();
      currentKey = key;
      total = 0;
    }
    total += count;
  }
  flush();
  return 0;
}

if (require.main === module) {
  main().then(
    (code) => process.exit(code),
    (err) => {
      process.stderr.write(`wordcount-reducer: ${err}\n`);
      process.exit(1);
    },
  );
}
