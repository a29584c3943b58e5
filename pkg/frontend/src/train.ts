/**
 * Training loop: per-pixel binary cross-entropy with RMSProp, seeded
 * shuffling, best-validation checkpointing, and VSEGW1 export.
 */

import * as fs from 'node:fs';
import * as tf from '@tensorflow/tfjs';

import { Dataset, DatasetError, Tensor, loadDataset, saveWeights } from './format.js';
import { UNet, labelsToTensor, makeRng, patchesToTensor } from './model.js';

export interface TrainConfig {
  datasetDir: string;
  weightsOut: string;
  metricsOut?: string;
  epochs: number;
  batchSize: number;
  learningRate: number;
  seed: number;
  /** Stop after the first epoch whose validation BCE drops below this. */
  stopBelowValBce?: number;
  log?: (line: string) => void;
}

export interface EpochMetrics {
  epoch: number;
  trainBce: number;
  valBce: number;
}

export interface TrainResult {
  metrics: EpochMetrics[];
  bestEpoch: number;
  bestValBce: number;
}

export const DEFAULTS = {
  epochs: 20,
  batchSize: 32,
  learningRate: 1e-3,
  seed: 0,
};

function shuffled(indices: number[], rng: () => number): number[] {
  const out = [...indices];
  for (let i = out.length - 1; i > 0; i--) {
    const j = Math.floor(rng() * (i + 1));
    [out[i], out[j]] = [out[j], out[i]];
  }
  return out;
}

function evalBce(model: UNet, data: Dataset, indices: number[], chunk = 64): number {
  let total = 0;
  for (let i = 0; i < indices.length; i += chunk) {
    const idx = indices.slice(i, i + chunk);
    const loss = tf.tidy(() => {
      const x = patchesToTensor(data.inputs, idx);
      const y = labelsToTensor(data.labels, idx);
      const logits = model.forwardLogits(x);
      return tf.losses.sigmoidCrossEntropy(y, logits).dataSync()[0];
    });
    total += loss * idx.length;
  }
  return total / indices.length;
}

export function train(config: TrainConfig): TrainResult {
  const log = config.log ?? (() => {});
  const data = loadDataset(config.datasetDir);
  if (data.trainIndices.length === 0 || data.valIndices.length === 0) {
    throw new DatasetError(
      `dataset needs both splits (train=${data.trainIndices.length}, ` +
      `val=${data.valIndices.length})`);
  }
  const model = UNet.init(config.seed);
  const optimizer = tf.train.rmsprop(config.learningRate);
  const rng = makeRng(config.seed ^ 0x9e3779b9);

  const metrics: EpochMetrics[] = [];
  let bestEpoch = -1;
  let bestValBce = Infinity;
  let bestSnapshot: Map<string, Tensor> | null = null;

  try {
    for (let epoch = 0; epoch < config.epochs; epoch++) {
      const order = shuffled(data.trainIndices, rng);
      let lossSum = 0;
      let seen = 0;
      for (let i = 0; i < order.length; i += config.batchSize) {
        const idx = order.slice(i, i + config.batchSize);
        const x = patchesToTensor(data.inputs, idx);
        const y = labelsToTensor(data.labels, idx);
        const loss = optimizer.minimize(
          () => tf.losses.sigmoidCrossEntropy(y, model.forwardLogits(x)),
          true, model.trainableVariables()) as tf.Scalar;
        const value = loss.dataSync()[0];
        tf.dispose([x, y, loss]);
        if (!Number.isFinite(value)) {
          throw new Error(`non-finite training loss at epoch ${epoch}`);
        }
        lossSum += value * idx.length;
        seen += idx.length;
      }
      const trainBce = lossSum / seen;
      const valBce = evalBce(model, data, data.valIndices);
      if (!Number.isFinite(valBce)) {
        throw new Error(`non-finite validation loss at epoch ${epoch}`);
      }
      metrics.push({ epoch, trainBce, valBce });
      log(`epoch ${epoch}: train_bce=${trainBce.toFixed(4)} val_bce=${valBce.toFixed(4)}`);
      if (valBce < bestValBce) {
        bestValBce = valBce;
        bestEpoch = epoch;
        bestSnapshot = model.toBundle();
      }
      if (config.stopBelowValBce !== undefined && valBce < config.stopBelowValBce) {
        log(`stopping: val_bce below ${config.stopBelowValBce}`);
        break;
      }
    }
  } finally {
    optimizer.dispose();
    model.dispose();
  }

  saveWeights(bestSnapshot!, config.weightsOut);
  if (config.metricsOut) {
    const rows = metrics.map(
      (m) => `${m.epoch},${m.trainBce},${m.valBce}`);
    fs.writeFileSync(config.metricsOut,
                     ['epoch,train_bce,val_bce', ...rows, ''].join('\n'));
  }
  return { metrics, bestEpoch, bestValBce };
}
