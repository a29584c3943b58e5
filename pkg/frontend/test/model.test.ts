import { execFileSync } from 'node:child_process';
import * as fs from 'node:fs';
import * as os from 'node:os';
import * as path from 'node:path';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { initBackend } from '../src/backend.js';
import { IN_CHANNELS, PATCH, saveWeights } from '../src/format.js';
import { UNet, makeRng, patchesToTensor } from '../src/model.js';

const tmp = fs.mkdtempSync(path.join(os.tmpdir(), 'vsegm-'));
afterAll(() => fs.rmSync(tmp, { recursive: true, force: true }));
beforeAll(async () => {
  await initBackend();
});

function randomPatches(n: number, seed: number): Float32Array {
  const rng = makeRng(seed);
  const out = new Float32Array(n * IN_CHANNELS * PATCH * PATCH);
  for (let i = 0; i < out.length; i++) out[i] = rng();
  return out;
}

describe('initialization', () => {
  it('is deterministic for a fixed seed', () => {
    const a = UNet.init(5).toBundle();
    const b = UNet.init(5).toBundle();
    for (const [name, t] of a) expect(b.get(name)!.data).toEqual(t.data);
  });

  it('differs across seeds', () => {
    const a = UNet.init(1).toBundle().get('enc1.conv1.kernel')!.data;
    const b = UNet.init(2).toBundle().get('enc1.conv1.kernel')!.data;
    expect(a).not.toEqual(b);
  });
});

describe('forward pass', () => {
  it('maps (N, 64, 64, 2) to (N, 64, 64) probabilities in (0, 1)', () => {
    const model = UNet.init(3);
    const x = patchesToTensor(randomPatches(2, 9), [0, 1]);
    const p = model.probabilities(x);
    expect(p.shape).toEqual([2, PATCH, PATCH]);
    const values = p.dataSync();
    for (const v of values) {
      expect(v).toBeGreaterThan(0);
      expect(v).toBeLessThan(1);
    }
  });

  it('matches the segmentation engine within 1e-3', () => {
    const model = UNet.init(11);
    const weightsFile = path.join(tmp, 'parity.vsegw1');
    saveWeights(model.toBundle(), weightsFile);

    const n = 10;
    const patches = randomPatches(n, 17);
    const patchFile = path.join(tmp, 'patches.bin');
    const outFile = path.join(tmp, 'probs.bin');
    fs.writeFileSync(patchFile, Buffer.from(patches.buffer));
    execFileSync('voltseg', ['unet-forward', '--weights', weightsFile,
                             '--patches', patchFile, '--out', outFile]);
    const theirs = new Float32Array(fs.readFileSync(outFile).buffer.slice(0));

    const mine = model
      .probabilities(patchesToTensor(patches, [...Array(n).keys()]))
      .dataSync();
    expect(theirs.length).toBe(mine.length);
    let worst = 0;
    for (let i = 0; i < mine.length; i++) {
      worst = Math.max(worst, Math.abs(mine[i] - theirs[i]));
    }
    expect(worst).toBeLessThanOrEqual(1e-3);
  });

  it('round trips through the bundle without changing outputs', () => {
    const model = UNet.init(21);
    const clone = UNet.fromBundle(model.toBundle());
    const x = patchesToTensor(randomPatches(1, 4), [0]);
    const a = model.probabilities(x).dataSync();
    const b = clone.probabilities(x).dataSync();
    expect(b).toEqual(a);
  });
});
