/** Image decoding: binary PPM (P6) natively, PNG via pngjs. */

import * as fs from 'fs'
import { PNG } from 'pngjs'

export interface RgbImage {
  width: number
  height: number
  /** Row-major RGB triples, length = width * height * 3. */
  data: Uint8Array
}

function parsePpm(buf: Buffer, file: string): RgbImage {
  if (buf.toString('ascii', 0, 2) !== 'P6') {
    throw new Error(`${file}: not a binary PPM`)
  }
  let pos = 2
  const fields: number[] = []
  while (fields.length < 3) {
    while (pos < buf.length && /\s/.test(String.fromCharCode(buf[pos]))) pos++
    if (buf[pos] === 0x23) { // '#' comment
      while (pos < buf.length && buf[pos] !== 0x0a) pos++
      continue
    }
    let start = pos
    while (pos < buf.length && !/\s/.test(String.fromCharCode(buf[pos]))) pos++
    fields.push(parseInt(buf.toString('ascii', start, pos), 10))
  }
  pos++ // single whitespace after maxval
  const [width, height, maxval] = fields
  if (maxval !== 255) {
    throw new Error(`${file}: only maxval 255 supported`)
  }
  const need = width * height * 3
  if (buf.length < pos + need) {
    throw new Error(`${file}: truncated pixel data`)
  }
  return { width, height, data: new Uint8Array(buf.subarray(pos, pos + need)) }
}

function parsePng(buf: Buffer): RgbImage {
  const png = PNG.sync.read(buf)
  const data = new Uint8Array(png.width * png.height * 3)
  for (let i = 0; i < png.width * png.height; i++) {
    data[i * 3] = png.data[i * 4]
    data[i * 3 + 1] = png.data[i * 4 + 1]
    data[i * 3 + 2] = png.data[i * 4 + 2]
  }
  return { width: png.width, height: png.height, data }
}

export function loadImage(file: string): RgbImage {
  const buf = fs.readFileSync(file)
  if (buf.length >= 8 && buf.readUInt32BE(0) === 0x89504e47) {
    return parsePng(buf)
  }
  if (buf.toString('ascii', 0, 2) === 'P6') {
    return parsePpm(buf, file)
  }
  throw new Error(`${file}: unsupported image format (PPM or PNG expected)`)
}
