/**
 * SRT tensor files: magic "SRT1", u8 dtype code (1 = f32, 2 = u8),
 * u8 ndim (1-4), ndim x u32 little-endian dims, C-order little-endian
 * payload. No trailing bytes permitted.
 */

import { readFileSync, writeFileSync } from "node:fs";

export interface Tensor {
  dtype: "f32" | "u8";
  dims: number[];
  /** flat C-order payload */
  data: Float64Array;
}

const MAGIC = "SRT1";
const MAX_ELEMENTS = 2 ** 28;

export class SrtFormatError extends Error {}

export function loadSrt(path: string): Tensor {
  const blob = readFileSync(path);
  if (blob.length < 6) throw new SrtFormatError(`${path}: truncated header`);
  if (blob.toString("latin1", 0, 4) !== MAGIC) {
    throw new SrtFormatError(`${path}: bad magic`);
  }
  const code = blob[4];
  const ndim = blob[5];
  if (code !== 1 && code !== 2) throw new SrtFormatError(`${path}: unknown dtype code ${code}`);
  if (ndim < 1 || ndim > 4) throw new SrtFormatError(`${path}: ndim must be 1-4, got ${ndim}`);
  const dimsEnd = 6 + 4 * ndim;
  if (blob.length < dimsEnd) throw new SrtFormatError(`${path}: truncated dims`);
  const dims: number[] = [];
  let n = 1;
  for (let i = 0; i < ndim; i++) {
    const d = blob.readUInt32LE(6 + 4 * i);
    if (d === 0) throw new SrtFormatError(`${path}: zero-sized dim`);
    dims.push(d);
    n *= d;
  }
  if (n > MAX_ELEMENTS) throw new SrtFormatError(`${path}: dim overflow`);
  const itemSize = code === 1 ? 4 : 1;
  if (blob.length !== dimsEnd + n * itemSize) {
    throw new SrtFormatError(
      `${path}: expected ${n * itemSize} payload bytes, got ${blob.length - dimsEnd}`,
    );
  }
  const data = new Float64Array(n);
  if (code === 1) {
    for (let i = 0; i < n; i++) data[i] = blob.readFloatLE(dimsEnd + 4 * i);
  } else {
    for (let i = 0; i < n; i++) data[i] = blob[dimsEnd + i];
  }
  return { dtype: code === 1 ? "f32" : "u8", dims, data };
}

export function saveSrtU8(path: string, dims: number[], data: Uint8Array): void {
  const n = dims.reduce((a, b) => a * b, 1);
  if (data.length !== n) throw new SrtFormatError("payload does not match dims");
  const header = Buffer.alloc(6 + 4 * dims.length);
  header.write(MAGIC, 0, "latin1");
  header[4] = 2;
  header[5] = dims.length;
  dims.forEach((d, i) => header.writeUInt32LE(d, 6 + 4 * i));
  writeFileSync(path, Buffer.concat([header, Buffer.from(data)]));
}

export function saveSrtF32(path: string, dims: number[], data: Float32Array): void {
  const n = dims.reduce((a, b) => a * b, 1);
  if (data.length !== n) throw new SrtFormatError("payload does not match dims");
  const header = Buffer.alloc(6 + 4 * dims.length);
  header.write(MAGIC, 0, "latin1");
  header[4] = 1;
  header[5] = dims.length;
  dims.forEach((d, i) => header.writeUInt32LE(d, 6 + 4 * i));
  const payload = Buffer.alloc(4 * n);
  for (let i = 0; i < n; i++) payload.writeFloatLE(data[i], 4 * i);
  writeFileSync(path, Buffer.concat([header, payload]));
}
