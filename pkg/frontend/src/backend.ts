/** tfjs backend selection: wasm when it initializes, plain cpu otherwise. */

import * as tf from '@tensorflow/tfjs';
import '@tensorflow/tfjs-backend-wasm';

let ready: Promise<string> | null = null;

export function initBackend(): Promise<string> {
  if (!ready) {
    ready = (async () => {
      try {
        await tf.setBackend('wasm');
      } catch {
        await tf.setBackend('cpu');
      }
      await tf.ready();
      return tf.getBackend();
    })();
  }
  return ready;
}
