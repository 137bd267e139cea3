/**
 * Word-count mapper: emits `word \t 1` for every token of every input
 * record. Tokenization splits on ASCII whitespace with no case folding,
 * applied to the decoded key and value separately (the tab between them is
 * itself whitespace, so the token stream matches the raw input line).
 * Malformed lines are skipped and logged to stderr.
 */

import { CodecError, decodeRecord, encodeRecord } from "./codec";
import { readLines, writeLine } from "./lines";

const ASCII_WHITESPACE = /[\t\n\x0b\f\r ]+/;

export function tokenize(text: string): string[] {
  return text.split(ASCII_WHITESPACE).filter((t) => t.length > 0);
}

async function main(): Promise<number> {
  for await (const line of readLines(process.stdin)) {
    let record;
    try {
      record = decodeRecord(line);
    } catch (err) {
      if (err instanceof CodecError) {
        process.stderr.write(`wordcount-mapper: skipping malformed line: ${err.message}\n`);
        continue;
      }
      throw err;
    }
    for (const token of [...tokenize(record.key), ...tokenize(record.value)]) {
      writeLine(encodeRecord({ key: token, value: "1" }));
    }
  }
  return 0;
}

if (require.main === module) {
  main().then(
    (code) => process.exit(code),
    (err) => {
      process.stderr.write(`wordcount-mapper: ${err}\n`);
      process.exit(1);
    },
  );
}
