/**
 * CLI: `train` fits the U-Net on a patch dataset and writes VSEGW1 weights;
 * `forward` runs inference on raw f32 patches (parity check surface).
 */

import * as fs from 'node:fs';
import { parseArgs } from 'node:util';

import { initBackend } from './backend.js';
import {
  DatasetError,
  IN_CHANNELS,
  PATCH,
  WeightFormatError,
  loadWeights,
} from './format.js';
import { UNet, patchesToTensor } from './model.js';
import { DEFAULTS, train } from './train.js';

const USAGE = `usage: voltseg-trainer train --dataset DIR --out WEIGHTS.vsegw1
  [--metrics FILE.csv] [--epochs N=${DEFAULTS.epochs}] [--batch N=${DEFAULTS.batchSize}]
  [--lr F=${DEFAULTS.learningRate}] [--seed N=${DEFAULTS.seed}] [--stop-below-val-bce F]
   or: voltseg-trainer forward --weights WEIGHTS.vsegw1 --patches IN.bin --out OUT.bin`;

async function cmdForward(rest: string[]): Promise<number> {
  const { values } = parseArgs({
    args: rest,
    options: {
      weights: { type: 'string' },
      patches: { type: 'string' },
      out: { type: 'string' },
    },
  });
  if (!values.weights || !values.patches || !values.out) {
    console.error(USAGE);
    return 2;
  }
  await initBackend();
  const model = UNet.fromBundle(loadWeights(values.weights));
  const raw = fs.readFileSync(values.patches);
  const stride = IN_CHANNELS * PATCH * PATCH * 4;
  if (raw.length === 0 || raw.length % stride !== 0) {
    console.error(`${values.patches}: size is not a positive multiple of ` +
                  `${IN_CHANNELS}x${PATCH}x${PATCH} floats`);
    return 1;
  }
  const n = raw.length / stride;
  const inputs = new Float32Array(
    raw.buffer.slice(raw.byteOffset, raw.byteOffset + raw.length));
  const probs = model
    .probabilities(patchesToTensor(inputs, [...Array(n).keys()]))
    .dataSync() as Float32Array;
  fs.writeFileSync(values.out, Buffer.from(probs.buffer));
  return 0;
}

async function main(argv: string[]): Promise<number> {
  const [command, ...rest] = argv;
  if (command === 'forward') {
    try {
      return await cmdForward(rest);
    } catch (err) {
      if (err instanceof WeightFormatError) {
        console.error(String(err));
        return 1;
      }
      throw err;
    }
  }
  if (command !== 'train') {
    console.error(USAGE);
    return 2;
  }
  let values;
  try {
    ({ values } = parseArgs({
      args: rest,
      options: {
        dataset: { type: 'string' },
        out: { type: 'string' },
        metrics: { type: 'string' },
        epochs: { type: 'string' },
        batch: { type: 'string' },
        lr: { type: 'string' },
        seed: { type: 'string' },
        'stop-below-val-bce': { type: 'string' },
      },
    }));
  } catch (err) {
    console.error(String(err));
    console.error(USAGE);
    return 2;
  }
  if (!values.dataset || !values.out) {
    console.error(USAGE);
    return 2;
  }
  const backend = await initBackend();
  console.log(`backend: ${backend}`);
  try {
    const result = train({
      datasetDir: values.dataset,
      weightsOut: values.out,
      metricsOut: values.metrics,
      epochs: values.epochs ? Number(values.epochs) : DEFAULTS.epochs,
      batchSize: values.batch ? Number(values.batch) : DEFAULTS.batchSize,
      learningRate: values.lr ? Number(values.lr) : DEFAULTS.learningRate,
      seed: values.seed ? Number(values.seed) : DEFAULTS.seed,
      stopBelowValBce: values['stop-below-val-bce']
        ? Number(values['stop-below-val-bce']) : undefined,
      log: (line) => console.log(line),
    });
    console.log(`best epoch ${result.bestEpoch}: val_bce=${result.bestValBce.toFixed(4)}`);
    return 0;
  } catch (err) {
    if (err instanceof DatasetError || err instanceof WeightFormatError) {
      console.error(String(err));
      return 1;
    }
    throw err;
  }
}

main(process.argv.slice(2)).then((code) => {
  process.exitCode = code;
});
