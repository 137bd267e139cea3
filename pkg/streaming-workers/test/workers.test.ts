import { spawn, spawnSync } from "node:child_process";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, resolve } from "node:path";
import { describe, expect, it } from "vitest";

import { encodeRecord } from "../src/codec";
import { tokenize } from "../src/wordcount-mapper";

const DIST = resolve(__dirname, "..", "dist");
const NODE = process.execPath;

interface RunResult {
  stdout: Buffer;
  stderr: string;
  code: number | null;
}

function runWorker(script: string, input: Buffer | string): Promise<RunResult> {
  return new Promise((resolvePromise, reject) => {
    const child = spawn(NODE, [join(DIST, script)], { stdio: ["pipe", "pipe", "pipe"] });
    const out: Buffer[] = [];
    const err: Buffer[] = [];
    child.stdout.on("data", (chunk) => out.push(chunk));
    child.stderr.on("data", (chunk) => err.push(chunk));
    child.on("error", reject);
    child.on("close", (code) =>
      resolvePromise({
        stdout: Buffer.concat(out),
        stderr: Buffer.concat(err).toString(),
        code,
      }),
    );
    child.stdin.write(input);
    child.stdin.end();
  });
}

function lcg(seed: number): () => number {
  let s = seed >>> 0;
  return () => {
    s = (Math.imul(s, 1664525) + 1013904223) >>> 0;
    return s / 2 ** 32;
  };
}

describe("identity worker", () => {
  it("round-trips a 10,000-record fixture byte-for-byte", async () => {
    const rand = lcg(1234);
    const lines: string[] = [];
    for (let i = 0; i < 10000; i++) {
      let key = "";
      let value = "";
      const keyLen = Math.floor(rand() * 16);
      const valueLen = Math.floor(rand() * 16);
      for (let j = 0; j < keyLen; j++) key += String.fromCharCode(Math.floor(rand() * 256));
      for (let j = 0; j < valueLen; j++) value += String.fromCharCode(Math.floor(rand() * 256));
      lines.push(encodeRecord({ key, value }));
    }
    const input = Buffer.from(lines.join("\n") + "\n", "latin1");
    const result = await runWorker("identity-worker.js", input);
    expect(result.code).toBe(0);
    expect(result.stdout.equals(input)).toBe(true);
  });

  it("produces empty output and exit 0 on empty stdin", async () => {
    const result = await runWorker("identity-worker.js", Buffer.alloc(0));
    expect(result.code).toBe(0);
    expect(result.stdout.length).toBe(0);
  });
});

describe("word-count mapper", () => {
  it("emits one word\\t1 line per token", async () => {
    const result = await runWorker("wordcount-mapper.js", "the cat the\n");
    expect(result.code).toBe(0);
    expect(result.stdout.toString()).toBe("the\t1\ncat\t1\nthe\t1\n");
  });

  it("tokenizes key and value on ASCII whitespace", () => {
    expect(tokenize("a  b\tc\r\nd")).toEqual(["a", "b", "c", "d"]);
    expect(tokenize("")).toEqual([]);
  });

  it("skips malformed lines with a stderr note", async () => {
    const result = await runWorker("wordcount-mapper.js", "ok line\nbroken\\q\nmore\n");
    expect(result.code).toBe(0);
    expect(result.stdout.toString()).toBe("ok\t1\nline\t1\nmore\t1\n");
    expect(result.stderr).toContain("malformed");
  });
});

describe("word-count reducer", () => {
  it("sums grouped values per key", async () => {
    const result = await runWorker("wordcount-reducer.js", "a\t1\na\t1\nb\t1\n");
    expect(result.code).toBe(0);
    expect(result.stdout.toString()).toBe("a\t2\nb\t1\n");
  });

  it("matches a hash-map counting oracle through the mapper+reducer pipe", async () => {
    const rand = lcg(99);
    const vocab = ["alpha", "beta", "gamma", "delta", "epsilon"];
    const lines: string[] = [];
    const oracle = new Map<string, number>();
    for (let i = 0; i < 500; i++) {
      const words: string[] = [];
      const n = 1 + Math.floor(rand() * 8);
      for (let j = 0; j < n; j++) {
        const word = vocab[Math.floor(rand() * vocab.length)];
        words.push(word);
        oracle.set(word, (oracle.get(word) ?? 0) + 1);
      }
      lines.push(words.join(" "));
    }
    const mapped = await runWorker("wordcount-mapper.js", lines.join("\n") + "\n");
    expect(mapped.code).toBe(0);
    // shuffle stand-in: sort mapper output lines so identical keys are adjacent
    const sorted = mapped.stdout.toString().split("\n").filter(Boolean).sort();
    const reduced = await runWorker("wordcount-reducer.js", sorted.join("\n") + "\n");
    expect(reduced.code).toBe(0);
    const got = new Map<string, number>();
    for (const line of reduced.stdout.toString().split("\n").filter(Boolean)) {
      const [word, count] = line.split("\t");
      got.set(word, parseInt(count, 10));
    }
    expect(got).toEqual(oracle);
  });
});

describe("engine parity via the CLI", () => {
  it(
    "streaming word count is byte-identical to the native job",
    { timeout: 180000 },
    () => {
      const tmp = mkdtempSync(join(tmpdir(), "workers-"));
      const corpusDir = join(tmp, "corpus");
      const workspace = join(tmp, "ws");

      const gen = spawnSync(
        "python3",
        ["-m", "minimr", "gen", "corpus", "--out", corpusDir, "--size-mb", "0.3", "--seed", "21"],
        { encoding: "utf8" },
      );
      expect(gen.status, gen.stderr).toBe(0);

      const nativeOut = join(tmp, "native.tsv");
      const native = spawnSync(
        "python3",
        ["-m", "minimr", "wordcount", "--input", corpusDir, "--output", nativeOut,
         "--workspace", workspace, "--job-id", "native", "--split-size", "500",
         "--map-slots", "2"],
        { encoding: "utf8" },
      );
      expect(native.status, native.stderr).toBe(0);

      const streamedOut = join(tmp, "streamed.tsv");
      const streamed = spawnSync(
        "python3",
        ["-m", "minimr", "wordcount", "--input", corpusDir, "--output", streamedOut,
         "--workspace", workspace, "--job-id", "streamed", "--split-size", "500",
         "--map-slots", "2",
         "--streaming-mapper", `${NODE} ${join(DIST, "wordcount-mapper.js")}`,
         "--streaming-reducer", `${NODE} ${join(DIST, "wordcount-reducer.js")}`],
        { encoding: "utf8" },
      );
      expect(streamed.status, streamed.stderr).toBe(0);

      const nativeBytes = readFileSync(nativeOut);
      const streamedBytes = readFileSync(streamedOut);
      expect(nativeBytes.length).toBeGreaterThan(0);
      expect(streamedBytes.equals(nativeBytes)).toBe(true);
    },
  );

  it(
    "identity worker round-trips records through the engine bridge",
    { timeout: 120000 },
    () => {
      const tmp = mkdtempSync(join(tmpdir(), "workers-id-"));
      const manifest = join(tmp, "manifest");
      const entries: string[] = [];
      for (let i = 0; i < 200; i++) {
        entries.push(`entry-${String(i).padStart(5, "0")}\tpayload-${i}`);
      }
      writeFileSync(manifest, entries.join("\n") + "\n");

      // R=0 job: identity-mapped output is the final output, order preserved
      const script = [
        "import sys",
        "from minimr.core import JobSpec, run_job",
        "from minimr.streaming import StreamingTaskSpec",
        "from minimr.records import read_records",
        `mapper = StreamingTaskSpec(argv=(${JSON.stringify(NODE)}, ${JSON.stringify(join(DIST, "identity-worker.js"))}))`,
        `result = run_job(JobSpec(job_id='id', input_manifest=${JSON.stringify(manifest)}, mapper=mapper,`,
        `    workspace=${JSON.stringify(join(tmp, "ws"))}, split_size=50, num_reducers=0))`,
        "records = [r for p in result.output_paths for r in read_records(p)]",
        "print('COUNT=%d' % len(records))",
        "print('FIRST=%s' % records[0].key.decode())",
        "print('VALUE=%s' % records[0].value.decode())",
      ].join("\n");
      const run = spawnSync("python3", ["-c", script], { encoding: "utf8" });
      expect(run.status, run.stderr).toBe(0);
      expect(run.stdout).toContain("COUNT=200");
      expect(run.stdout).toContain("FIRST=entry-00000");
      expect(run.stdout).toContain("VALUE=payload-0");
    },
  );
});
