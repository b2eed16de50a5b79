/**
 * Minimal NPY v1.0 reader/writer for the toolkit's storage subset:
 * little-endian float32 ('<f4'), float64 ('<f8') and uint8 ('|u1'),
 * C-order only. Headers are padded to a 64-byte boundary, matching what
 * standard scientific tooling emits, so files interoperate both ways.
 */

import { readFileSync, writeFileSync } from 'node:fs'

const MAGIC = Buffer.from('\x93NUMPY', 'latin1')

export type Dtype = '<f4' | '<f8' | '|u1'
export type Payload = Float32Array | Float64Array | Uint8Array

export interface NpyArray {
  dtype: Dtype
  shape: number[]
  data: Payload
}

export class NpyFormatError extends Error {}

const ITEM_SIZE: Record<Dtype, number> = { '<f4': 4, '<f8': 8, '|u1': 1 }

function product(shape: number[]): number {
  return shape.reduce((a, b) => a * b, 1)
}

export function readNpy(path: string): NpyArray {
  const buf = readFileSync(path)
  if (buf.length < 10 || !buf.subarray(0, 6).equals(MAGIC)) {
    throw new NpyFormatError(`${path}: not an NPY file (bad magic)`)
  }
  if (buf[6] !== 1 || buf[7] !== 0) {
    throw new NpyFormatError(`${path}: unsupported NPY version ${buf[6]}.${buf[7]}`)
  }
  const headerLen = buf.readUInt16LE(8)
  const headerEnd = 10 + headerLen
  if (buf.length < headerEnd) {
    throw new NpyFormatError(`${path}: truncated header`)
  }
  const header = buf.subarray(10, headerEnd).toString('latin1')

  const descrMatch = header.match(/'descr'\s*:\s*'([^']+)'/)
  const orderMatch = header.match(/'fortran_order'\s*:\s*(True|False)/)
  const shapeMatch = header.match(/'shape'\s*:\s*\(([^)]*)\)/)
  if (!descrMatch || !orderMatch || !shapeMatch) {
    throw new NpyFormatError(`${path}: malformed header: ${header.trim()}`)
  }
  const descr = descrMatch[1]
  if (!(descr in ITEM_SIZE)) {
    throw new NpyFormatError(`${path}: unsupported dtype ${descr}`)
  }
  const dtype = descr as Dtype
  if (orderMatch[1] !== 'False') {
    throw new NpyFormatError(`${path}: fortran_order is set, only C-order is supported`)
  }
  const shapeBody = shapeMatch[1].trim()
  const shape = shapeBody === ''
    ? []
    : shapeBody.split(',').filter((tok) => tok.trim() !== '').map((tok) => {
        const dim = Number(tok.trim())
        if (!Number.isInteger(dim) || dim < 0) {
          throw new NpyFormatError(`${path}: malformed header: bad shape (${shapeBody})`)
        }
        return dim
      })

  const expected = product(shape) * ITEM_SIZE[dtype]
  const payload = buf.subarray(headerEnd)
  if (payload.length < expected) {
    throw new NpyFormatError(
      `${path}: truncated payload: expected ${expected} bytes, got ${payload.length}`,
    )
  }
  if (payload.length > expected) {
    throw new NpyFormatError(
      `${path}: payload length mismatch: expected ${expected} bytes, got ${payload.length}`,
    )
  }
  // copy into a fresh, zero-offset buffer so the typed-array view is aligned
  const bytes = new Uint8Array(payload)
  let data: Payload
  if (dtype === '<f4') data = new Float32Array(bytes.buffer)
  else if (dtype === '<f8') data = new Float64Array(bytes.buffer)
  else data = bytes
  return { dtype, shape, data }
}

export function writeNpy(path: string, arr: NpyArray): void {
  const { dtype, shape, data } = arr
  if (product(shape) !== data.length) {
    throw new NpyFormatError(
      `shape (${shape.join(', ')}) needs ${product(shape)} elements, payload has ${data.length}`,
    )
  }
  const shapeRepr = shape.length === 1 ? `(${shape[0]},)` : `(${shape.join(', ')})`
  const dict = `{'descr': '${dtype}', 'fortran_order': False, 'shape': ${shapeRepr}, }`
  const base = 10 + dict.length + 1
  const pad = (64 - (base % 64)) % 64
  const header = dict + ' '.repeat(pad) + '\n'

  const payload = Buffer.from(data.buffer, data.byteOffset, data.byteLength)
  const lenBuf = Buffer.alloc(2)
  lenBuf.writeUInt16LE(header.length)
  writeFileSync(
    path,
    Buffer.concat([MAGIC, Buffer.from([1, 0]), lenBuf, Buffer.from(header, 'latin1'), payload]),
  )
}
