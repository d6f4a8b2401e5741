/**
 * Deterministic threshold backend: inside the box, Otsu's threshold on the
 * channel mean (256 levels), keep the largest 4-connected component of the
 * brighter class, zero outside.
 *
 * Arithmetic deliberately mirrors the primary implementation operation for
 * operation (f64 channel mean, round-half-up quantization, integer
 * histogram sums, (n0*n1)*(d*d) score, strict-improvement/lowest-threshold
 * tie break, raster-scan component labeling, lowest-label area tie break),
 * so both produce bit-identical masks for the same inputs.
 */

export interface Box {
  xmin: number;
  ymin: number;
  xmax: number;
  ymax: number;
}

export function otsuThreshold(levels: Int32Array): number | null {
  const hist = new Float64Array(256);
  for (let i = 0; i < levels.length; i++) hist[levels[i]] += 1;
  let total = 0;
  let totalSum = 0;
  for (let l = 0; l < 256; l++) {
    total += hist[l];
    totalSum += l * hist[l];
  }
  let bestT: number | null = null;
  let bestScore = -Infinity;
  let n0 = 0;
  let sum0 = 0;
  for (let t = 0; t < 255; t++) {
    n0 += hist[t];
    sum0 += t * hist[t];
    const n1 = total - n0;
    if (n0 === 0 || n1 === 0) continue;
    const mu0 = sum0 / n0;
    const mu1 = (totalSum - sum0) / n1;
    const d = mu0 - mu1;
    const score = n0 * n1 * (d * d);
    if (score > bestScore) {
      bestScore = score;
      bestT = t;
    }
  }
  return bestT;
}

/** Largest 4-connected component, labels assigned in raster-scan order. */
function largestComponent(fg: Uint8Array, h: number, w: number): Uint8Array {
  const labels = new Int32Array(h * w);
  const areas: number[] = [0]; // label 0 = background
  const queue = new Int32Array(h * w);
  let next = 0;
  for (let start = 0; start < h * w; start++) {
    if (fg[start] === 0 || labels[start] !== 0) continue;
    next += 1;
    let area = 0;
    let head = 0;
    let tail = 0;
    queue[tail++] = start;
    labels[start] = next;
    while (head < tail) {
      const p = queue[head++];
      area++;
      const y = Math.floor(p / w);
      const x = p - y * w;
      if (y > 0 && fg[p - w] === 1 && labels[p - w] === 0) {
        labels[p - w] = next;
        queue[tail++] = p - w;
      }
      if (y < h - 1 && fg[p + w] === 1 && labels[p + w] === 0) {
        labels[p + w] = next;
        queue[tail++] = p + w;
      }
      if (x > 0 && fg[p - 1] === 1 && labels[p - 1] === 0) {
        labels[p - 1] = next;
        queue[tail++] = p - 1;
      }
      if (x < w - 1 && fg[p + 1] === 1 && labels[p + 1] === 0) {
        labels[p + 1] = next;
        queue[tail++] = p + 1;
      }
    }
    areas.push(area);
  }
  const out = new Uint8Array(h * w);
  if (next === 0) return out;
  let keep = 1;
  for (let l = 2; l <= next; l++) if (areas[l] > areas[keep]) keep = l;
  for (let i = 0; i < h * w; i++) out[i] = labels[i] === keep ? 1 : 0;
  return out;
}

/**
 * channels: flat (3, H, W) f64 values in [0, 1]; returns a flat (H, W) u8 mask.
 */
export function oracleSegment(
  channels: Float64Array,
  height: number,
  width: number,
  box: Box,
): Uint8Array {
  const plane = height * width;
  const bw = box.xmax - box.xmin + 1;
  const bh = box.ymax - box.ymin + 1;
  const levels = new Int32Array(bw * bh);
  for (let y = 0; y < bh; y++) {
    for (let x = 0; x < bw; x++) {
      const p = (box.ymin + y) * width + (box.xmin + x);
      const mean = (channels[p] + channels[plane + p] + channels[2 * plane + p]) / 3.0;
      levels[y * bw + x] = Math.floor(mean * 255.0 + 0.5);
    }
  }
  const out = new Uint8Array(plane);
  const t = otsuThreshold(levels);
  if (t === null) return out;
  const fg = new Uint8Array(bw * bh);
  for (let i = 0; i < fg.length; i++) fg[i] = levels[i] > t ? 1 : 0;
  const component = largestComponent(fg, bh, bw);
  for (let y = 0; y < bh; y++) {
    for (let x = 0; x < bw; x++) {
      out[(box.ymin + y) * width + (box.xmin + x)] = component[y * bw + x];
    }
  }
  return out;
}
