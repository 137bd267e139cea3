/**
 * Byte-safe line iteration over stdin. The record codec escapes newlines
 * inside fields, so every 0x0a byte on the stream terminates a line.
 */

import { Readable } from "node:stream";

export async function* readLines(stream: Readable): AsyncGenerator<string> {
  let carry = "";
  for await (const chunk of stream) {
    const data = carry + (chunk as Buffer).toString("latin1");
    const parts = data.split("\n");
    carry = parts.pop() ?? "";
    for (const part of parts) {
      yield part;
    }
  }
  if (carry.length > 0) {
    yield carry;
  }
}

export function writeLine(line: string): void {
  process.stdout.write(Buffer.from(line + "\n", "latin1"));
}
