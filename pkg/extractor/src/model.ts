/**
 * VGG-16-class convolution stack through relu5_3.
 *
 * Thirteen 3x3 convolutions in five blocks (64, 128, 256, 512, 512
 * channels) with 2x2 max-pooling after the first four blocks, so the
 * relu5_3 grid is floor(H/16) x floor(W/16) x 512. Weights are loaded from
 * a directory of FTEN files when given, otherwise drawn from a seeded
 * deterministic generator (He-scaled), which preserves every contract of
 * the adapter (dims, non-negativity, determinism) without network access.
 */

import * as path from 'path'
import * as fs from 'fs'
import * as tf from '@tensorflow/tfjs'

import { readFten } from './ften'
import { RgbImage } from './image'

export const FEATURE_DEPTH = 512
export const DOWNSAMPLE = 16

/** Blocks as [channels, number of convs]; pooling follows all but the last. */
const BLOCKS: Array<[number, number]> = [[64, 2], [128, 2], [256, 3], [512, 3], [512, 3]]

export interface ConvLayer {
  name: string
  kernel: tf.Tensor4D
  bias: tf.Tensor1D
}

/** Deterministic 32-bit PRNG (mulberry32). */
function mulberry32(seed: number): () => number {
  let a = seed >>> 0
  return () => {
    a = (a + 0x6d2b79f5) >>> 0
    let t = a
    t = Math.imul(t ^ (t >>> 15), t | 1)
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61)
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296
  }
}

function seededNormal(rand: () => number, count: number, std: number): Float32Array {
  const out = new Float32Array(count)
  for (let i = 0; i < count; i += 2) {
    const u = Math.max(rand(), 1e-12)
    const v = rand()
    const mag = Math.sqrt(-2.0 * Math.log(u))
    out[i] = mag * Math.cos(2 * Math.PI * v) * std
    if (i + 1 < count) out[i + 1] = mag * Math.sin(2 * Math.PI * v) * std
  }
  return out
}

export function layerNames(): string[] {
  const names: string[] = []
  BLOCKS.forEach(([, convs], block) => {
    for (let i = 1; i <= convs; i++) names.push(`conv${block + 1}_${i}`)
  })
  return names
}

export function buildLayers(seed: number, weightsDir?: string): ConvLayer[] {
  const layers: ConvLayer[] = []
  let cin = 3
  let layerIndex = 0
  for (const [channels, convs] of BLOCKS) {
    for (let i = 1; i <= convs; i++) {
      const name = layerNames()[layerIndex]
      let kernel: tf.Tensor4D
      let bias: tf.Tensor1D
      if (weightsDir) {
        const k = readFten(path.join(weightsDir, `${name}.ften`))
        const b = readFten(path.join(weightsDir, `${name}.bias.ften`))
        if (k.dims.join() !== [3, 3, cin, channels].join()) {
          throw new Error(`${name}: kernel dims ${k.dims} != 3,3,${cin},${channels}`)
        }
        kernel = tf.tensor4d(k.data, [3, 3, cin, channels])
        bias = tf.tensor1d(b.data)
      } else {
        const rand = mulberry32(seed * 1013 + layerIndex)
        const std = Math.sqrt(2 / (9 * cin))
        kernel = tf.tensor4d(seededNormal(rand, 9 * cin * channels, std), [3, 3, cin, channels])
        bias = tf.tensor1d(new Float32Array(channels))
      }
      layers.push({ name, kernel, bias })
      layerIndex++
      cin = channels
    }
  }
  return layers
}

export function assertWeightsDir(dir: string): void {
  for (const name of layerNames()) {
    if (!fs.existsSync(path.join(dir, `${name}.ften`))) {
      throw new Error(`weights dir is missing ${name}.ften`)
    }
  }
}

/** Run the stack; returns relu5_3 activations as [h', w', 512] in C order. */
export function forward(layers: ConvLayer[], image: RgbImage): {
  height: number
  width: number
  depth: number
  data: Float32Array
} {
  const out = tf.tidy(() => {
    const pixels = new Float32Array(image.width * image.height * 3)
    for (let i = 0; i < pixels.length; i++) {
      pixels[i] = image.data[i] / 255 - 0.5
    }
    let x = tf.tensor4d(pixels, [1, image.height, image.width, 3])
    let layerIndex = 0
    for (let block = 0; block < BLOCKS.length; block++) {
      const [, convs] = BLOCKS[block]
      for (let i = 0; i < convs; i++) {
        const layer = layers[layerIndex++]
        x = tf.relu(tf.add(tf.conv2d(x, layer.kernel, 1, 'same'), layer.bias))
      }
      if (block < BLOCKS.length - 1) {
        x = tf.maxPool(x, 2, 2, 'valid')
      }
    }
    return x
  })
  const [, height, width, depth] = out.shape
  const data = out.dataSync() as Float32Array
  out.dispose()
  return { height, width, depth, data: Float32Array.from(data) }
}

export async function initBackend(prefer: string = 'wasm'): Promise<string> {
  if (prefer === 'wasm') {
    try {
      const wasm = require('@tensorflow/tfjs-backend-wasm')
      wasm.setThreadsCount(1) // single-threaded keeps results bit-reproducible
      if (await tf.setBackend('wasm')) {
        await tf.ready()
        return 'wasm'
      }
    } catch {
      // fall through to cpu
    }
  }
  await tf.setBackend('cpu')
  await tf.ready()
  return 'cpu'
}
