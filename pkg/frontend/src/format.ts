/**
 * Binary formats shared with the segmentation engine: the VSEGW1 weight
 * container and the raw patch-dataset layout (patches.bin / labels.bin /
 * manifest.json).
 */

import * as fs from 'node:fs';
import * as path from 'node:path';

export const PATCH = 64;
export const IN_CHANNELS = 2;
export const ENCODER_WIDTHS = [16, 32, 64];

const WEIGHT_MAGIC = Buffer.from('VSEGW1\0\0', 'latin1');

export class WeightFormatError extends Error {}
export class DatasetError extends Error {}

export interface TensorSpec {
  name: string;
  shape: number[];
}

export interface Tensor {
  shape: number[];
  data: Float32Array;
}

/** Ordered canonical parameter tensors; kernels are (out, in, ky, kx). */
export function architecture(): TensorSpec[] {
  const specs: TensorSpec[] = [];
  const conv = (name: string, cin: number, cout: number, k = 3) => {
    specs.push({ name: `${name}.kernel`, shape: [cout, cin, k, k] });
    specs.push({ name: `${name}.bias`, shape: [cout] });
  };
  let cin = IN_CHANNELS;
  ENCODER_WIDTHS.forEach((cout, i) => {
    conv(`enc${i + 1}.conv1`, cin, cout);
    conv(`enc${i + 1}.conv2`, cout, cout);
    cin = cout;
  });
  for (let level = ENCODER_WIDTHS.length - 1; level >= 1; level--) {
    const cout = ENCODER_WIDTHS[level - 1];
    conv(`dec${level}.conv1`, cin + cout, cout);
    conv(`dec${level}.conv2`, cout, cout);
    cin = cout;
  }
  conv('out.conv', cin, 1, 1);
  return specs;
}

/** Stable identifier tying weight files to the layer graph. */
export function architectureFingerprint(): string {
  const parts = architecture().map((t) => `${t.name}:${t.shape.join('x')}`);
  return `vseg-unet/${PATCH}x${PATCH}x${IN_CHANNELS};` + parts.join(';');
}

export function parameterCount(): number {
  return architecture().reduce(
    (acc, t) => acc + t.shape.reduce((a, b) => a * b, 1), 0);
}

export function validateBundle(tensors: Map<string, Tensor>): void {
  const expected = architecture();
  for (const spec of expected) {
    const t = tensors.get(spec.name);
    if (!t) throw new WeightFormatError(`missing tensor '${spec.name}'`);
    if (t.shape.length !== spec.shape.length ||
        t.shape.some((d, i) => d !== spec.shape[i])) {
      throw new WeightFormatError(
        `tensor '${spec.name}' has shape [${t.shape}], expected [${spec.shape}]`);
    }
    for (const v of t.data) {
      if (!Number.isFinite(v)) {
        throw new WeightFormatError(`tensor '${spec.name}' contains non-finite values`);
      }
    }
  }
  const names = new Set(expected.map((s) => s.name));
  for (const name of tensors.keys()) {
    if (!names.has(name)) throw new WeightFormatError(`unexpected tensor '${name}'`);
  }
}

/** Serialize to VSEGW1 (little-endian, f32 values) with an atomic rename. */
export function saveWeights(tensors: Map<string, Tensor>, file: string): void {
  validateBundle(tensors);
  const parts: Buffer[] = [WEIGHT_MAGIC];
  const u32 = (v: number) => {
    const b = Buffer.alloc(4);
    b.writeUInt32LE(v);
    return b;
  };
  parts.push(u32(tensors.size));
  const fp = Buffer.from(architectureFingerprint(), 'utf8');
  parts.push(u32(fp.length), fp);
  for (const spec of architecture()) {
    const t = tensors.get(spec.name)!;
    const nb = Buffer.from(spec.name, 'utf8');
    parts.push(u32(nb.length), nb);
    parts.push(u32(t.shape.length));
    for (const d of t.shape) parts.push(u32(d));
    parts.push(Buffer.from(t.data.buffer, t.data.byteOffset, t.data.byteLength));
  }
  const tmp = `${file}.tmp-${process.pid}`;
  fs.writeFileSync(tmp, Buffer.concat(parts));
  fs.renameSync(tmp, file);
}

/** Read and validate a VSEGW1 weight file. */
export function loadWeights(file: string): Map<string, Tensor> {
  const raw = fs.readFileSync(file);
  let off = 0;
  const take = (n: number, what: string): Buffer => {
    if (off + n > raw.length) {
      throw new WeightFormatError(`${file}: truncated reading ${what} at byte ${off}`);
    }
    const chunk = raw.subarray(off, off + n);
    off += n;
    return chunk;
  };
  if (!take(8, 'magic').equals(WEIGHT_MAGIC)) {
    throw new WeightFormatError(`${file}: bad magic bytes`);
  }
  const count = take(4, 'tensor count').readUInt32LE();
  const fplen = take(4, 'fingerprint length').readUInt32LE();
  const fingerprint = take(fplen, 'fingerprint').toString('utf8');
  if (fingerprint !== architectureFingerprint()) {
    throw new WeightFormatError(`${file}: architecture fingerprint mismatch`);
  }
  const tensors = new Map<string, Tensor>();
  for (let i = 0; i < count; i++) {
    const nlen = take(4, 'name length').readUInt32LE();
    const name = take(nlen, 'tensor name').toString('utf8');
    const ndim = take(4, `ndim of ${name}`).readUInt32LE();
    const shape: number[] = [];
    for (let d = 0; d < ndim; d++) {
      shape.push(take(4, `dims of ${name}`).readUInt32LE());
    }
    const elems = shape.reduce((a, b) => a * b, 1);
    const bytes = take(4 * elems, `values of ${name}`);
    const data = new Float32Array(elems);
    for (let j = 0; j < elems; j++) data[j] = bytes.readFloatLE(4 * j);
    tensors.set(name, { shape, data });
  }
  if (off !== raw.length) {
    throw new WeightFormatError(`${file}: ${raw.length - off} trailing bytes at byte ${off}`);
  }
  validateBundle(tensors);
  return tensors;
}

export interface ManifestEntry {
  index: number;
  video: number;
  pair: number;
  x: number;
  y: number;
  split: 'train' | 'val';
}

export interface Dataset {
  /** (N, 2, 64, 64) float32, channel-first as stored on disk. */
  inputs: Float32Array;
  /** (N, 64, 64) 0/1. */
  labels: Uint8Array;
  count: number;
  trainIndices: number[];
  valIndices: number[];
}

/** Load a patch dataset directory written by the segmentation engine. */
export function loadDataset(dir: string): Dataset {
  const manifestPath = path.join(dir, 'manifest.json');
  if (!fs.existsSync(manifestPath)) {
    throw new DatasetError(`no manifest.json in ${dir}`);
  }
  const manifest = JSON.parse(fs.readFileSync(manifestPath, 'utf8'));
  const count: number = manifest.patch_count;
  if (!Number.isInteger(count) || count <= 0) {
    throw new DatasetError(`${manifestPath}: empty or invalid patch_count`);
  }
  if (manifest.patch_size !== PATCH || manifest.channels !== IN_CHANNELS) {
    throw new DatasetError(
      `${manifestPath}: expects ${PATCH}x${PATCH}x${IN_CHANNELS} patches`);
  }
  const entries: ManifestEntry[] = manifest.entries;
  if (!Array.isArray(entries) || entries.length !== count) {
    throw new DatasetError(`${manifestPath}: entries do not match patch_count`);
  }
  const patchBytes = fs.readFileSync(path.join(dir, 'patches.bin'));
  const expected = count * IN_CHANNELS * PATCH * PATCH * 4;
  if (patchBytes.length !== expected) {
    throw new DatasetError(
      `patches.bin is ${patchBytes.length} bytes, expected ${expected}`);
  }
  const labelBytes = fs.readFileSync(path.join(dir, 'labels.bin'));
  if (labelBytes.length !== count * PATCH * PATCH) {
    throw new DatasetError(
      `labels.bin is ${labelBytes.length} bytes, expected ${count * PATCH * PATCH}`);
  }
  const inputs = new Float32Array(
    patchBytes.buffer.slice(patchBytes.byteOffset,
                            patchBytes.byteOffset + patchBytes.length));
  const labels = new Uint8Array(labelBytes);
  const trainIndices: number[] = [];
  const valIndices: number[] = [];
  for (const e of entries) {
    (e.split === 'val' ? valIndices : trainIndices).push(e.index);
  }
  return { inputs, labels, count, trainIndices, valIndices };
}
