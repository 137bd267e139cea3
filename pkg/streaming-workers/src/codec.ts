/**
 * Record line codec shared with the engine: `key \t value` per line, with
 * backslash escapes for tab (\t), newline (\n) and backslash (\\) inside
 * fields. Fields are raw bytes; buffers are round-tripped through latin1
 * strings (one byte per char) so no byte value is ever mangled.
 */

export interface KV {
  key: string; // latin1-safe string, one char per byte
  value: string;
}

export class CodecError extends Error {}

export function escapeField(field: string): string {
  if (!/[\\\t\n]/.test(field)) {
    return field;
  }
  return field.replace(/\\/g, "\\\\").replace(/\t/g, "\\t").replace(/\n/g, "\\n");
}

export function unescapeField(field: string): string {
  let idx = field.indexOf("\\");
  if (idx < 0) {
    return field;
  }
  let out = "";
  let pos = 0;
  while (idx >= 0) {
    out += field.slice(pos, idx);
    const next = field[idx + 1];
    if (next === "t") {
      out += "\t";
    } else if (next === "n") {
      out += "\n";
    } else if (next === "\\") {
      out += "\\";
    } else if (next === undefined) {
      throw new CodecError("dangling backslash at end of field");
    } else {
      throw new CodecError(`bad escape sequence \\${next}`);
    }
    pos = idx + 2;
    idx = field.indexOf("\\", pos);
  }
  return out + field.slice(pos);
}

export function encodeRecord(record: KV): string {
  return `${escapeField(record.key)}\t${escapeField(record.value)}`;
}

/** A line without a tab decodes as (whole line, empty value). */
export function decodeRecord(line: string): KV {
  const stripped = line.endsWith("\n") ? line.slice(0, -1) : line;
  const sep = stripped.indexOf("\t");
  if (sep < 0) {
    return { key: unescapeField(stripped), value: "" };
  }
  return {
    key: unescapeField(stripped.slice(0, sep)),
    value: unescapeField(stripped.slice(sep + 1)),
  };
}
