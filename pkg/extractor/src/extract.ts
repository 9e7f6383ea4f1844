/** Batch extraction: images in, one FTEN tensor per image out. */

import * as fs from 'fs'
import * as path from 'path'

import { writeFten } from './ften'
import { loadImage } from './image'
import { ConvLayer, DOWNSAMPLE, FEATURE_DEPTH, buildLayers, forward, assertWeightsDir } from './model'

export interface ExtractJob {
  images: string[]
  outDir: string
  weightsDir?: string
  seed?: number
}

export interface ExtractResult {
  image: string
  tensor: string
  dims: number[]
}

/** Expand a path, directory, or single trailing-star glob into files. */
export function expandImages(pattern: string): string[] {
  if (fs.existsSync(pattern) && fs.statSync(pattern).isDirectory()) {
    return fs.readdirSync(pattern).sort()
      .filter((f) => /\.(ppm|png)$/i.test(f))
      .map((f) => path.join(pattern, f))
  }
  if (pattern.includes('*')) {
    const dir = path.dirname(pattern)
    const re = new RegExp(
      '^' + path.basename(pattern).split('*').map(escapeRegExp).join('.*') + '$')
    return fs.readdirSync(dir).sort()
      .filter((f) => re.test(f))
      .map((f) => path.join(dir, f))
  }
  if (!fs.existsSync(pattern)) {
    throw new Error(`no such image: ${pattern}`)
  }
  return [pattern]
}

function escapeRegExp(s: string): string {
  return s.replace(/[.+?^${}()|[\]\\]/g, '\\$&')
}

export function extract(job: ExtractJob, layers?: ConvLayer[]): ExtractResult[] {
  if (job.weightsDir) {
    assertWeightsDir(job.weightsDir)
  }
  const stack = layers ?? buildLayers(job.seed ?? 42, job.weightsDir)
  const results: ExtractResult[] = []
  for (const imagePath of job.images) {
    const image = loadImage(imagePath)
    const features = forward(stack, image)
    const expectH = Math.floor(image.height / DOWNSAMPLE)
    const expectW = Math.floor(image.width / DOWNSAMPLE)
    if (features.height !== expectH || features.width !== expectW
        || features.depth !== FEATURE_DEPTH) {
      throw new Error(`${imagePath}: got ${features.height}x${features.width}x` +
        `${features.depth}, expected ${expectH}x${expectW}x${FEATURE_DEPTH}`)
    }
    const stem = path.basename(imagePath).replace(/\.(ppm|png)$/i, '')
    const outPath = path.join(job.outDir, `${stem}.ften`)
    writeFten(outPath, [features.height, features.width, features.depth], features.data)
    results.push({ image: imagePath, tensor: outPath,
                   dims: [features.height, features.width, features.depth] })
  }
  return results
}
