/**
 * Segmentation backends. A backend answers a box prompt with one or more
 * scored candidate masks; the server keeps the highest-scoring one. The
 * built-in stub backend is the deterministic threshold oracle and always
 * returns a single candidate. A real promptable segmenter is wired in by
 * pointing --backend at an ES module exporting `segment` (and optionally
 * `predict`), typically a thin wrapper around the model runtime and its
 * checkpoint.
 */

import { pathToFileURL } from "node:url";

import { Box, oracleSegment } from "./oracle.js";

export interface Candidate {
  /** flat (H, W) mask, values 0/1 */
  mask: Uint8Array;
  score: number;
}

export interface Backend {
  name: string;
  segment(
    channels: Float64Array,
    height: number,
    width: number,
    box: Box,
  ): Candidate[] | Promise<Candidate[]>;
  predict?(
    channels: Float64Array,
    nchan: number,
    height: number,
    width: number,
  ): { prob: Float32Array; classes: number } | Promise<{ prob: Float32Array; classes: number }>;
}

export const stubBackend: Backend = {
  name: "stub",
  segment(channels, height, width, box) {
    return [{ mask: oracleSegment(channels, height, width, box), score: 1.0 }];
  },
};

export async function loadModuleBackend(spec: string): Promise<Backend> {
  const mod = await import(pathToFileURL(spec).href);
  if (typeof mod.segment !== "function") {
    throw new Error(`backend module ${spec} does not export segment()`);
  }
  return {
    name: `module:${spec}`,
    segment: mod.segment,
    predict: typeof mod.predict === "function" ? mod.predict : undefined,
  };
}

export function selectBest(candidates: Candidate[]): Candidate {
  if (candidates.length === 0) throw new Error("backend returned no candidates");
  let best = candidates[0];
  for (const c of candidates.slice(1)) {
    if (c.score > best.score) best = c;
  }
  return best;
}
