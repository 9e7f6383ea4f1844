/**
 * FTEN tensor files: magic "FTEN", u32 LE version (=1), u32 LE ndims,
 * ndims u32 LE dims, float32 LE payload in C order.
 */

import * as fs from 'fs'
import * as path from 'path'

const MAGIC = 'FTEN'
const VERSION = 1

export function encodeFten(dims: number[], payload: Float32Array): Buffer {
  const expected = dims.reduce((a, b) => a * b, 1)
  if (payload.length !== expected) {
    throw new Error(`payload has ${payload.length} values, dims ${dims} need ${expected}`)
  }
  const header = Buffer.alloc(4 + 4 + 4 + 4 * dims.length)
  header.write(MAGIC, 0, 'ascii')
  header.writeUInt32LE(VERSION, 4)
  header.writeUInt32LE(dims.length, 8)
  dims.forEach((d, i) => header.writeUInt32LE(d, 12 + 4 * i))
  const body = Buffer.alloc(payload.length * 4)
  for (let i = 0; i < payload.length; i++) {
    body.writeFloatLE(payload[i], i * 4)
  }
  return Buffer.concat([header, body])
}

export function writeFten(file: string, dims: number[], payload: Float32Array): void {
  // temp + rename so readers never observe partial files
  const tmp = file + '.tmp'
  fs.mkdirSync(path.dirname(file), { recursive: true })
  fs.writeFileSync(tmp, encodeFten(dims, payload))
  fs.renameSync(tmp, file)
}

export function readFten(file: string): { dims: number[]; data: Float32Array } {
  const buf = fs.readFileSync(file)
  if (buf.toString('ascii', 0, 4) !== MAGIC) {
    throw new Error(`${file}: bad magic`)
  }
  if (buf.readUInt32LE(4) !== VERSION) {
    throw new Error(`${file}: unsupported version`)
  }
  const ndims = buf.readUInt32LE(8)
  const dims: number[] = []
  for (let i = 0; i < ndims; i++) {
    dims.push(buf.readUInt32LE(12 + 4 * i))
  }
  const offset = 12 + 4 * ndims
  const count = dims.reduce((a, b) => a * b, 1)
  if (buf.length !== offset + 4 * count) {
    throw new Error(`${file}: payload size mismatch`)
  }
  const data = new Float32Array(count)
  for (let i = 0; i < count; i++) {
    data[i] = buf.readFloatLE(offset + 4 * i)
  }
  return { dims, data }
}
