import { spawn } from "node:child_process";
import { mkdtempSync, readFileSync, readdirSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import { loadSrt } from "../src/srt.js";

const HERE = dirname(fileURLToPath(import.meta.url));
const MAIN = join(HERE, "..", "dist", "main.js");
const FIXTURES = join(HERE, "..", "..", "tests", "fixtures", "protocol");

interface RunResult {
  code: number;
  lines: string[];
}

function runBridge(args: string[], input: string): Promise<RunResult> {
  return new Promise((resolveDone, reject) => {
    const proc = spawn("node", [MAIN, ...args]);
    let out = "";
    proc.stdout.on("data", (chunk) => (out += chunk.toString()));
    proc.on("error", reject);
    proc.on("close", (code) =>
      resolveDone({ code: code ?? -1, lines: out.trim().split("\n") }),
    );
    proc.stdin.write(input);
    proc.stdin.end();
  });
}

const goldenRequest = () => ({
  id: 1,
  op: "segment",
  image: join(FIXTURES, "golden_image.srt"),
  box: JSON.parse(readFileSync(join(FIXTURES, "golden_box.json"), "utf8")).box,
});

describe("bridge process", () => {
  it("prints the handshake before anything else", async () => {
    const { lines } = await runBridge(["--stub"], "");
    expect(JSON.parse(lines[0])).toEqual({ proto: "srpl-seg/1" });
  });

  it("replays the recorded fixture and reproduces the golden mask", async () => {
    const outDir = mkdtempSync(join(tmpdir(), "bridge-"));
    const { code, lines } = await runBridge(
      ["--stub", "--out-dir", outDir],
      JSON.stringify(goldenRequest()) + "\n",
    );
    expect(code).toBe(0);
    const reply = JSON.parse(lines[1]);
    expect(reply.id).toBe(1);
    expect(reply.ok).toBe(true);
    const produced = loadSrt(reply.mask);
    const golden = loadSrt(join(FIXTURES, "golden_mask.srt"));
    expect(Array.from(produced.data)).toEqual(Array.from(golden.data));
  });

  it("answers malformed requests with errors and stays alive", async () => {
    const outDir = mkdtempSync(join(tmpdir(), "bridge-"));
    const malformed = readFileSync(join(FIXTURES, "malformed_requests.jsonl"), "utf8")
      .trim()
      .split("\n");
    const input = malformed.join("\n") + "\n" + JSON.stringify({ ...goldenRequest(), id: 42 }) + "\n";
    const { code, lines } = await runBridge(["--stub", "--out-dir", outDir], input);
    expect(code).toBe(0);
    const replies = lines.slice(1).map((l) => JSON.parse(l));
    expect(replies.length).toBe(malformed.length + 1);
    for (const doc of replies.slice(0, -1)) {
      expect(doc.ok).toBe(false);
      expect(typeof doc.error).toBe("string");
    }
    const last = replies[replies.length - 1];
    expect(last.id).toBe(42);
    expect(last.ok).toBe(true);
  });

  it("rejects an out-of-bounds box with ok:false", async () => {
    const outDir = mkdtempSync(join(tmpdir(), "bridge-"));
    const req = { ...goldenRequest(), id: 7, box: [0, 0, 500, 500] };
    const { lines } = await runBridge(["--stub", "--out-dir", outDir], JSON.stringify(req) + "\n");
    const reply = JSON.parse(lines[1]);
    expect(reply.id).toBe(7);
    expect(reply.ok).toBe(false);
    expect(reply.error).toMatch(/bounds/);
  });

  it("keeps ids in order across multiple requests", async () => {
    const outDir = mkdtempSync(join(tmpdir(), "bridge-"));
    const reqs = [3, 1, 9].map((id) => JSON.stringify({ ...goldenRequest(), id })).join("\n");
    const { lines } = await runBridge(["--stub", "--out-dir", outDir], reqs + "\n");
    const ids = lines.slice(1).map((l) => JSON.parse(l).id);
    expect(ids).toEqual([3, 1, 9]);
  });

  it("writes masks only inside the designated directory", async () => {
    const outDir = mkdtempSync(join(tmpdir(), "bridge-"));
    await runBridge(["--stub", "--out-dir", outDir], JSON.stringify(goldenRequest()) + "\n");
    const produced = readdirSync(outDir);
    expect(produced).toEqual(["mask_000001.srt"]);
  });

  it("exits nonzero with a JSON error line when no backend is selected", async () => {
    const { code, lines } = await runBridge([], "");
    expect(code).toBe(1);
    expect(JSON.parse(lines[0]).fatal).toMatch(/backend/);
  });

  it("exits nonzero when a backend module fails to load", async () => {
    const { code, lines } = await runBridge(["--backend", "module:/nonexistent.mjs"], "");
    expect(code).toBe(1);
    expect(typeof JSON.parse(lines[0]).fatal).toBe("string");
  });

  it("selects the highest-scoring candidate from a multi-mask backend", async () => {
    const outDir = mkdtempSync(join(tmpdir(), "bridge-"));
    const backend = join(HERE, "fake_multimask_backend.mjs");
    const { lines } = await runBridge(
      ["--backend", `module:${backend}`, "--out-dir", outDir],
      JSON.stringify(goldenRequest()) + "\n",
    );
    const reply = JSON.parse(lines[1]);
    expect(reply.ok).toBe(true);
    const mask = loadSrt(reply.mask);
    let total = 0;
    for (const v of mask.data) total += v;
    expect(total).toBe(1); // the single-pixel candidate scored highest
  });

  it("answers predict with ok:false on the stub backend", async () => {
    const outDir = mkdtempSync(join(tmpdir(), "bridge-"));
    const req = { id: 5, op: "predict", image: join(FIXTURES, "golden_image.srt") };
    const { lines } = await runBridge(["--stub", "--out-dir", outDir], JSON.stringify(req) + "\n");
    const reply = JSON.parse(lines[1]);
    expect(reply.id).toBe(5);
    expect(reply.ok).toBe(false);
    expect(reply.error).toMatch(/predictor/);
  });
});
