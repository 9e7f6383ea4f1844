#!/usr/bin/env node
/** pyfeat --images <glob|dir|file> --out <dir> [--weights <dir>] [--seed N] */

import { parseArgs } from 'node:util'

import { expandImages, extract } from './extract'
import { initBackend } from './model'

async function main(): Promise<number> {
  const { values } = parseArgs({
    options: {
      images: { type: 'string' },
      out: { type: 'string' },
      weights: { type: 'string' },
      seed: { type: 'string', default: '42' },
      backend: { type: 'string', default: 'wasm' },
    },
  })
  if (!values.images || !values.out) {
    console.error('usage: pyfeat --images <glob|dir|file> --out <dir> ' +
      '[--weights <dir>] [--seed N] [--backend wasm|cpu]')
    return 2
  }
  const images = expandImages(values.images)
  if (images.length === 0) {
    console.error(`no images matched ${values.images}`)
    return 3
  }
  const backend = await initBackend(values.backend)
  console.error(`backend: ${backend}; ${images.length} image(s)`)
  const results = extract({
    images,
    outDir: values.out,
    weightsDir: values.weights,
    seed: parseInt(values.seed ?? '42', 10),
  })
  for (const r of results) {
    console.log(`${r.image} -> ${r.tensor} [${r.dims.join('x')}]`)
  }
  return 0
}

main().then(
  (code) => process.exit(code),
  (err) => {
    console.error(`error: ${err instanceof Error ? err.message : err}`)
    process.exit(3)
  },
)
