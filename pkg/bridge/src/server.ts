/**
 * srpl-seg/1 request loop: one line-delimited JSON request in flight at a
 * time over stdin/stdout, tensors exchanged by SRT file path. The
 * handshake line goes out before the first read; a malformed request gets
 * an ok:false reply and the process stays alive.
 */

import { createInterface } from "node:readline";
import { mkdirSync } from "node:fs";
import { join, resolve } from "node:path";

import { Backend, selectBest } from "./backend.js";
import { Box } from "./oracle.js";
import { loadSrt, saveSrtF32, saveSrtU8 } from "./srt.js";

export const PROTO_NAME = "srpl-seg/1";

export interface ServerOptions {
  backend: Backend;
  outDir: string;
  stdin?: NodeJS.ReadableStream;
  stdout?: NodeJS.WritableStream;
}

type Request = {
  id: number;
  op: "segment" | "predict";
  image: string;
  box?: number[];
};

function parseRequest(line: string): Request {
  let doc: unknown;
  try {
    doc = JSON.parse(line);
  } catch {
    throw new Error("request is not JSON");
  }
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    throw new Error("request is not a JSON object");
  }
  const req = doc as Record<string, unknown>;
  if (!Number.isInteger(req.id)) throw new Error("request id must be an integer");
  if (req.op !== "segment" && req.op !== "predict") {
    throw new Error(`unknown op ${JSON.stringify(req.op)}`);
  }
  if (typeof req.image !== "string") throw new Error("request must carry an 'image' path");
  if (req.op === "segment") {
    const box = req.box;
    if (
      !Array.isArray(box) ||
      box.length !== 4 ||
      !box.every((v) => Number.isInteger(v))
    ) {
      throw new Error("segment request needs box [xmin, ymin, xmax, ymax]");
    }
    const [xmin, ymin, xmax, ymax] = box as number[];
    if (xmin < 0 || ymin < 0 || xmin > xmax || ymin > ymax) {
      throw new Error(`box is empty or negative: ${JSON.stringify(box)}`);
    }
  }
  return req as unknown as Request;
}

async function handleSegment(req: Request, opts: ServerOptions): Promise<object> {
  const tensor = loadSrt(req.image);
  if (tensor.dtype !== "f32" || tensor.dims.length !== 3 || tensor.dims[0] !== 3) {
    throw new Error(
      `expected f32 (3, H, W) tensor, got ${tensor.dtype} (${tensor.dims.join(", ")})`,
    );
  }
  const [, height, width] = tensor.dims;
  const [xmin, ymin, xmax, ymax] = req.box as number[];
  if (xmax >= width || ymax >= height) {
    throw new Error(`box out of bounds for ${width}x${height} image`);
  }
  const box: Box = { xmin, ymin, xmax, ymax };
  const candidates = await opts.backend.segment(tensor.data, height, width, box);
  const best = selectBest(candidates);
  const maskPath = resolve(join(opts.outDir, `mask_${String(req.id).padStart(6, "0")}.srt`));
  saveSrtU8(maskPath, [height, width], best.mask);
  return { id: req.id, ok: true, mask: maskPath };
}

async function handlePredict(req: Request, opts: ServerOptions): Promise<object> {
  if (!opts.backend.predict) {
    throw new Error(`backend ${opts.backend.name} has no predictor`);
  }
  const tensor = loadSrt(req.image);
  if (
    tensor.dtype !== "f32" ||
    tensor.dims.length !== 3 ||
    (tensor.dims[0] !== 1 && tensor.dims[0] !== 3)
  ) {
    throw new Error(
      `expected f32 (1|3, H, W) tensor, got ${tensor.dtype} (${tensor.dims.join(", ")})`,
    );
  }
  const [nchan, height, width] = tensor.dims;
  const { prob, classes } = await opts.backend.predict(tensor.data, nchan, height, width);
  const probPath = resolve(join(opts.outDir, `prob_${String(req.id).padStart(6, "0")}.srt`));
  saveSrtF32(probPath, [classes, height, width], prob);
  return { id: req.id, ok: true, prob: probPath };
}

export async function serve(opts: ServerOptions): Promise<void> {
  const stdin = opts.stdin ?? process.stdin;
  const stdout = opts.stdout ?? process.stdout;
  mkdirSync(opts.outDir, { recursive: true });
  stdout.write(JSON.stringify({ proto: PROTO_NAME }) + "\n");

  const lines = createInterface({ input: stdin, crlfDelay: Infinity });
  for await (const line of lines) {
    if (line.trim() === "") continue;
    let reply: object;
    let reqId = -1;
    try {
      const probe = safeId(line);
      if (probe !== null) reqId = probe;
      const req = parseRequest(line);
      reply = req.op === "segment" ? await handleSegment(req, opts) : await handlePredict(req, opts);
    } catch (err) {
      reply = { id: reqId, ok: false, error: err instanceof Error ? err.message : String(err) };
    }
    stdout.write(JSON.stringify(reply) + "\n");
  }
}

function safeId(line: string): number | null {
  try {
    const doc = JSON.parse(line);
    if (doc && typeof doc === "object" && Number.isInteger(doc.id)) return doc.id as number;
  } catch {
    /* not JSON */
  }
  return null;
}
