import { execFileSync } from 'node:child_process';
import * as fs from 'node:fs';
import * as os from 'node:os';
import * as path from 'node:path';
import { afterAll, describe, expect, it } from 'vitest';

import {
  DatasetError,
  WeightFormatError,
  architecture,
  architectureFingerprint,
  loadDataset,
  loadWeights,
  parameterCount,
  saveWeights,
} from '../src/format.js';
import { UNet } from '../src/model.js';

const tmp = fs.mkdtempSync(path.join(os.tmpdir(), 'vsegw-'));
afterAll(() => fs.rmSync(tmp, { recursive: true, force: true }));

describe('architecture', () => {
  it('has the canonical parameter count', () => {
    expect(parameterCount()).toBe(118129);
  });

  it('fingerprint matches the segmentation engine', () => {
    const theirs = execFileSync('python3', [
      '-c', 'from voltseg.unet import architecture_fingerprint; print(architecture_fingerprint(), end="")',
    ]).toString();
    expect(architectureFingerprint()).toBe(theirs);
  });

  it('starts and ends with the expected tensors', () => {
    const specs = architecture();
    expect(specs[0]).toEqual({ name: 'enc1.conv1.kernel', shape: [16, 2, 3, 3] });
    expect(specs.at(-1)).toEqual({ name: 'out.conv.bias', shape: [1] });
    expect(specs).toHaveLength(22);
  });
});

describe('VSEGW1 round trip', () => {
  const file = path.join(tmp, 'w.vsegw1');
  const model = UNet.init(123);
  const bundle = model.toBundle();
  saveWeights(bundle, file);

  it('load returns the written tensors', () => {
    const back = loadWeights(file);
    expect(back.size).toBe(bundle.size);
    for (const [name, t] of bundle) {
      expect(back.get(name)!.shape).toEqual(t.shape);
      expect(back.get(name)!.data).toEqual(t.data);
    }
  });

  it('re-export is byte-identical', () => {
    const again = path.join(tmp, 'w2.vsegw1');
    saveWeights(loadWeights(file), again);
    expect(fs.readFileSync(again).equals(fs.readFileSync(file))).toBe(true);
  });

  it('export -> engine load -> engine re-export is byte-identical', () => {
    const out = path.join(tmp, 'w3.vsegw1');
    execFileSync('python3', ['-c', [
      'import sys',
      'from voltseg.unet import load_weights, save_weights',
      'save_weights(load_weights(sys.argv[1]), sys.argv[2])',
    ].join('\n'), file, out]);
    expect(fs.readFileSync(out).equals(fs.readFileSync(file))).toBe(true);
  });

  it('rejects bad magic', () => {
    const bad = path.join(tmp, 'bad.vsegw1');
    const raw = fs.readFileSync(file);
    raw[0] = 88;
    fs.writeFileSync(bad, raw);
    expect(() => loadWeights(bad)).toThrow(/bad magic/);
  });

  it('rejects truncation', () => {
    const bad = path.join(tmp, 'trunc.vsegw1');
    fs.writeFileSync(bad, fs.readFileSync(file).subarray(0, 500));
    expect(() => loadWeights(bad)).toThrow(/truncated/);
  });

  it('rejects trailing bytes', () => {
    const bad = path.join(tmp, 'trail.vsegw1');
    fs.writeFileSync(bad, Buffer.concat([fs.readFileSync(file), Buffer.from([0])]));
    expect(() => loadWeights(bad)).toThrow(/trailing/);
  });

  it('refuses to export with a tensor missing', () => {
    const partial = new Map(bundle);
    partial.delete('enc2.conv1.bias');
    expect(() => saveWeights(partial, path.join(tmp, 'x.vsegw1')))
      .toThrow(WeightFormatError);
  });

  it('refuses non-canonical tensor names', () => {
    const extra = new Map(bundle);
    extra.set('enc9.conv1.bias', { shape: [1], data: new Float32Array(1) });
    expect(() => saveWeights(extra, path.join(tmp, 'x.vsegw1')))
      .toThrow(/unexpected tensor/);
  });
});

describe('dataset loading', () => {
  it('errors on a missing manifest', () => {
    expect(() => loadDataset(tmp)).toThrow(DatasetError);
  });

  it('errors on an empty manifest before reading any patches', () => {
    const dir = path.join(tmp, 'empty');
    fs.mkdirSync(dir);
    fs.writeFileSync(path.join(dir, 'manifest.json'), JSON.stringify({
      patch_count: 0, patch_size: 64, channels: 2, entries: [],
    }));
    expect(() => loadDataset(dir)).toThrow(/empty or invalid/);
  });

  it('errors on size mismatch against the manifest', () => {
    const dir = path.join(tmp, 'short');
    fs.mkdirSync(dir);
    fs.writeFileSync(path.join(dir, 'manifest.json'), JSON.stringify({
      patch_count: 2, patch_size: 64, channels: 2,
      entries: [
        { index: 0, video: 0, pair: 0, x: 0, y: 0, split: 'train' },
        { index: 1, video: 0, pair: 0, x: 0, y: 0, split: 'val' },
      ],
    }));
    fs.writeFileSync(path.join(dir, 'patches.bin'), Buffer.alloc(64));
    fs.writeFileSync(path.join(dir, 'labels.bin'), Buffer.alloc(2 * 64 * 64));
    expect(() => loadDataset(dir)).toThrow(/patches.bin/);
  });
});
