/**
 * The canonical segmentation U-Net expressed with tfjs ops: encoder widths
 * [16, 32, 64] with two 3x3 conv + ReLU per level, 2x2 max pooling, a
 * mirrored decoder with nearest-neighbor upsampling and skip concatenation
 * ([upsampled, skip] channel order), and a final 1x1 convolution.
 *
 * Weights live in tfjs layout (kh, kw, cin, cout); conversion to and from
 * the engine's (cout, cin, kh, kw) layout happens at the bundle boundary.
 */

import * as tf from '@tensorflow/tfjs';

import {
  ENCODER_WIDTHS,
  IN_CHANNELS,
  PATCH,
  Tensor,
  architecture,
  validateBundle,
} from './format.js';

/** Deterministic PRNG (mulberry32) for reproducible initialization. */
export function makeRng(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function normals(rng: () => number, n: number, std: number): Float32Array {
  const out = new Float32Array(n);
  for (let i = 0; i < n; i += 2) {
    const u = Math.max(rng(), 1e-12);
    const v = rng();
    const r = Math.sqrt(-2 * Math.log(u));
    out[i] = r * Math.cos(2 * Math.PI * v) * std;
    if (i + 1 < n) out[i + 1] = r * Math.sin(2 * Math.PI * v) * std;
  }
  return out;
}

/**
 * Stride-1 zero-padded convolution as im2col + matMul. The wasm backend has
 * no Conv2DBackpropFilter kernel, so tf.conv2d cannot be trained there;
 * composing from pad/slice/concat/matMul keeps every gradient on wasm.
 */
export function conv2dSame(x: tf.Tensor4D, kernel: tf.Tensor4D): tf.Tensor4D {
  return tf.tidy(() => {
    const [n, h, w, cin] = x.shape;
    const [kh, kw, , cout] = kernel.shape;
    if (kh === 1 && kw === 1) {
      const out = tf.matMul(x.reshape([n * h * w, cin]),
                            kernel.reshape([cin, cout]));
      return out.reshape([n, h, w, cout]);
    }
    const py = (kh - 1) / 2;
    const px = (kw - 1) / 2;
    const xp = tf.pad(x, [[0, 0], [py, py], [px, px], [0, 0]]);
    const taps: tf.Tensor4D[] = [];
    for (let dy = 0; dy < kh; dy++) {
      for (let dx = 0; dx < kw; dx++) {
        taps.push(tf.slice(xp, [0, dy, dx, 0], [n, h, w, cin]));
      }
    }
    const cols = tf.concat(taps, -1).reshape([n * h * w, kh * kw * cin]);
    const out = tf.matMul(cols, kernel.reshape([kh * kw * cin, cout]));
    return out.reshape([n, h, w, cout]);
  });
}

export class UNet {
  readonly vars: Map<string, tf.Variable>;

  private constructor(vars: Map<string, tf.Variable>) {
    this.vars = vars;
  }

  /** He-initialized kernels, zero biases, reproducible for a given seed. */
  static init(seed: number): UNet {
    const rng = makeRng(seed);
    const vars = new Map<string, tf.Variable>();
    for (const spec of architecture()) {
      if (spec.name.endsWith('.kernel')) {
        const [cout, cin, kh, kw] = spec.shape;
        const fanIn = cin * kh * kw;
        const data = normals(rng, cout * cin * kh * kw, Math.sqrt(2 / fanIn));
        // Generate in engine (cout, cin, kh, kw) order, store in tfjs layout.
        const t = tf.tensor4d(data, [cout, cin, kh, kw]).transpose([2, 3, 1, 0]);
        vars.set(spec.name, tf.variable(t, true));
        t.dispose();
      } else {
        vars.set(spec.name, tf.variable(tf.zeros(spec.shape), true));
      }
    }
    return new UNet(vars);
  }

  static fromBundle(tensors: Map<string, Tensor>): UNet {
    validateBundle(tensors);
    const vars = new Map<string, tf.Variable>();
    for (const spec of architecture()) {
      const t = tensors.get(spec.name)!;
      if (spec.name.endsWith('.kernel')) {
        const raw = tf.tensor4d(t.data, t.shape as [number, number, number, number]);
        const hwio = raw.transpose([2, 3, 1, 0]);
        vars.set(spec.name, tf.variable(hwio, true));
        raw.dispose();
        hwio.dispose();
      } else {
        vars.set(spec.name, tf.variable(tf.tensor1d(t.data), true));
      }
    }
    return new UNet(vars);
  }

  /** Snapshot in the engine's (cout, cin, kh, kw) layout. */
  toBundle(): Map<string, Tensor> {
    const out = new Map<string, Tensor>();
    for (const spec of architecture()) {
      const v = this.vars.get(spec.name)!;
      let data: Float32Array;
      if (spec.name.endsWith('.kernel')) {
        data = tf.tidy(() =>
          v.transpose([3, 2, 0, 1]).dataSync() as Float32Array);
      } else {
        data = v.dataSync() as Float32Array;
      }
      out.set(spec.name, { shape: [...spec.shape], data });
    }
    return out;
  }

  trainableVariables(): tf.Variable[] {
    return [...this.vars.values()];
  }

  dispose(): void {
    for (const v of this.vars.values()) v.dispose();
  }

  private convBlock(x: tf.Tensor4D, name: string): tf.Tensor4D {
    for (const conv of ['conv1', 'conv2']) {
      const k = this.vars.get(`${name}.${conv}.kernel`)! as unknown as tf.Tensor4D;
      const b = this.vars.get(`${name}.${conv}.bias`)!;
      x = tf.relu(tf.add(conv2dSame(x, k), b));
    }
    return x;
  }

  /** NHWC (N, 64, 64, 2) input -> (N, 64, 64) logits. */
  forwardLogits(x: tf.Tensor4D): tf.Tensor3D {
    return tf.tidy(() => {
      const levels = ENCODER_WIDTHS.length;
      const skips: tf.Tensor4D[] = [];
      for (let level = 1; level <= levels; level++) {
        x = this.convBlock(x, `enc${level}`);
        if (level < levels) {
          skips.push(x);
          x = tf.maxPool(x, 2, 2, 'valid');
        }
      }
      for (let level = levels - 1; level >= 1; level--) {
        const up = tf.image.resizeNearestNeighbor(
          x, [x.shape[1] * 2, x.shape[2] * 2]) as tf.Tensor4D;
        x = this.convBlock(tf.concat([up, skips.pop()!], -1), `dec${level}`);
      }
      const k = this.vars.get('out.conv.kernel')! as unknown as tf.Tensor4D;
      const b = this.vars.get('out.conv.bias')!;
      const logits = tf.add(conv2dSame(x, k), b);
      return logits.squeeze([3]);
    });
  }

  /** NHWC input -> (N, 64, 64) probabilities, matching the engine forward. */
  probabilities(x: tf.Tensor4D): tf.Tensor3D {
    return tf.tidy(() => tf.sigmoid(this.forwardLogits(x)));
  }
}

/** Pack channel-first (count, 2, 64, 64) patches into an NHWC tensor. */
export function patchesToTensor(
  inputs: Float32Array,
  indices: number[],
): tf.Tensor4D {
  const stride = IN_CHANNELS * PATCH * PATCH;
  const batch = new Float32Array(indices.length * stride);
  indices.forEach((idx, i) => {
    batch.set(inputs.subarray(idx * stride, (idx + 1) * stride), i * stride);
  });
  return tf.tidy(() => tf
    .tensor4d(batch, [indices.length, IN_CHANNELS, PATCH, PATCH])
    .transpose([0, 2, 3, 1]));
}

/** Pack (count, 64, 64) 0/1 labels into a float tensor. */
export function labelsToTensor(labels: Uint8Array, indices: number[]): tf.Tensor3D {
  const stride = PATCH * PATCH;
  const batch = new Float32Array(indices.length * stride);
  indices.forEach((idx, i) => {
    for (let j = 0; j < stride; j++) batch[i * stride + j] = labels[idx * stride + j];
  });
  return tf.tensor3d(batch, [indices.length, PATCH, PATCH]);
}
