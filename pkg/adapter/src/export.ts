/**
 * Export externally produced softmax probability maps into the layout
 * the core toolkit ingests: per-member `member_<k>.npy` (float32,
 * H x W x C, C-order), ground-truth masks as uint8 under `gt/`, and an
 * `ensemble.json` manifest tying them together.
 *
 * Values pass through bit-for-bit except where a pixel's class sum
 * drifts from 1 by more than the core tolerance (1e-6): drifts up to
 * 1e-3 are repaired by dividing the pixel by its sum, anything larger
 * is rejected with the offending member and pixel named. NaN or
 * infinite values are always rejected.
 */

import { mkdirSync, readFileSync, writeFileSync } from 'node:fs'
import { dirname, join, resolve } from 'node:path'

import { NpyArray, readNpy, writeNpy } from './npy.js'

export const CORE_SUM_TOL = 1e-6
export const RENORM_LIMIT = 1e-3

export type AxisOrder = 'chw' | 'hwc'

export interface MemberSpec {
  id: string
  path: string
}

export interface ExternalRunSpec {
  formatVersion: number
  numClasses: number
  axisOrder: AxisOrder
  members: MemberSpec[]
  gt: string[]
}

export interface ExportResult {
  outDir: string
  memberPaths: string[]
  gtPaths: string[]
  renormalizedPixels: number
}

export class SpecError extends Error {}

export class ExportError extends Error {
  constructor(
    message: string,
    readonly member?: string,
    readonly pixel?: number,
    readonly violation?: string,
  ) {
    super(message)
  }
}

export function parseSpec(path: string): ExternalRunSpec {
  let raw: unknown
  try {
    raw = JSON.parse(readFileSync(path, 'utf8'))
  } catch (err) {
    throw new SpecError(`${path}: not valid JSON: ${(err as Error).message}`)
  }
  const doc = raw as Record<string, unknown>
  if (doc.format_version !== 1) {
    throw new SpecError(`${path}: unsupported format_version ${doc.format_version}`)
  }
  const numClasses = doc.num_classes
  if (typeof numClasses !== 'number' || !Number.isInteger(numClasses) || numClasses < 2) {
    throw new SpecError(`${path}: num_classes must be an integer >= 2`)
  }
  const axisOrder = doc.axis_order
  if (axisOrder !== 'chw' && axisOrder !== 'hwc') {
    throw new SpecError(`${path}: axis_order must be 'chw' or 'hwc'`)
  }
  const members = doc.members
  if (!Array.isArray(members) || members.length < 1) {
    throw new SpecError(`${path}: members must be a non-empty list`)
  }
  const parsedMembers = members.map((entry, i) => {
    const m = entry as Record<string, unknown>
    if (typeof m.id !== 'string' || typeof m.path !== 'string') {
      throw new SpecError(`${path}: members[${i}] needs string 'id' and 'path'`)
    }
    return { id: m.id, path: m.path }
  })
  const gt = doc.gt === undefined ? [] : doc.gt
  if (!Array.isArray(gt) || gt.some((p) => typeof p !== 'string')) {
    throw new SpecError(`${path}: gt must be a list of paths`)
  }
  const base = dirname(resolve(path))
  return {
    formatVersion: 1,
    numClasses,
    axisOrder,
    members: parsedMembers.map((m) => ({ id: m.id, path: resolve(base, m.path) })),
    gt: (gt as string[]).map((p) => resolve(base, p)),
  }
}

interface LoadedMember {
  id: string
  height: number
  width: number
  values: Float32Array // H x W x C, C-order
}

function loadMember(spec: ExternalRunSpec, member: MemberSpec): LoadedMember {
  const arr = readNpy(member.path)
  if (arr.dtype !== '<f4') {
    throw new ExportError(
      `member ${member.id}: expected float32 probabilities, got ${arr.dtype}`,
      member.id, undefined, 'dtype',
    )
  }
  if (arr.shape.length !== 3) {
    throw new ExportError(
      `member ${member.id}: expected a 3-d array, got shape (${arr.shape.join(', ')})`,
      member.id, undefined, 'shape',
    )
  }
  const c = spec.numClasses
  const [d0, , d2] = arr.shape
  if (spec.axisOrder === 'chw' ? d0 !== c : d2 !== c) {
    throw new ExportError(
      `member ${member.id}: shape (${arr.shape.join(', ')}) does not put ` +
        `${c} classes ${spec.axisOrder === 'chw' ? 'first' : 'last'}; declared axis_order ${spec.axisOrder}`,
      member.id, undefined, 'axis-order',
    )
  }
  const data = arr.data as Float32Array
  if (spec.axisOrder === 'hwc') {
    return { id: member.id, height: arr.shape[0], width: arr.shape[1], values: data }
  }
  // transpose C x H x W -> H x W x C; element copies preserve bits
  const [, h, w] = arr.shape
  const out = new Float32Array(h * w * c)
  for (let cls = 0; cls < c; cls++) {
    const plane = cls * h * w
    for (let y = 0; y < h; y++) {
      const row = y * w
      for (let x = 0; x < w; x++) {
        out[(row + x) * c + cls] = data[plane + row + x]
      }
    }
  }
  return { id: member.id, height: h, width: w, values: out }
}

/** Repair pixel sums in place; returns how many pixels were rescaled. */
function normalizeProbabilities(member: LoadedMember, numClasses: number): number {
  const { values, id } = member
  const pixels = values.length / numClasses
  let renormalized = 0
  for (let p = 0; p < pixels; p++) {
    const base = p * numClasses
    let sum = 0
    for (let cls = 0; cls < numClasses; cls++) {
      const v = values[base + cls]
      if (!Number.isFinite(v)) {
        throw new ExportError(
          `member ${id}: non-finite probability ${v} at pixel ${p}`,
          id, p, 'non-finite',
        )
      }
      sum += v
    }
    const deviation = Math.abs(sum - 1)
    if (deviation <= CORE_SUM_TOL) continue
    if (deviation > RENORM_LIMIT) {
      throw new ExportError(
        `member ${id}: class sum ${sum} at pixel ${p} deviates by ${deviation}, ` +
          `beyond the repairable limit ${RENORM_LIMIT}`,
        id, p, 'sum',
      )
    }
    for (let cls = 0; cls < numClasses; cls++) {
      values[base + cls] = Math.fround(values[base + cls] / sum)
    }
    renormalized++
  }
  return renormalized
}

function loadGtMask(path: string, numClasses: number, height: number, width: number): NpyArray {
  const arr = readNpy(path)
  if (arr.dtype !== '|u1') {
    throw new ExportError(`ground truth ${path}: expected uint8 labels, got ${arr.dtype}`)
  }
  if (arr.shape.length !== 2 || arr.shape[0] !== height || arr.shape[1] !== width) {
    throw new ExportError(
      `ground truth ${path}: shape (${arr.shape.join(', ')}) does not match members ` +
        `(${height}, ${width})`,
    )
  }
  const labels = arr.data as Uint8Array
  for (let p = 0; p < labels.length; p++) {
    if (labels[p] >= numClasses) {
      throw new ExportError(
        `ground truth ${path}: label ${labels[p]} at pixel ${p} outside [0, ${numClasses - 1}]`,
        undefined, p, 'label-range',
      )
    }
  }
  return arr
}

export function runExport(spec: ExternalRunSpec, outDir: string): ExportResult {
  const loaded = spec.members.map((m) => loadMember(spec, m))
  const { height, width } = loaded[0]
  for (const member of loaded.slice(1)) {
    if (member.height !== height || member.width !== width) {
      throw new ExportError(
        `member ${member.id}: grid ${member.height} x ${member.width} differs from ` +
          `${loaded[0].id}'s ${height} x ${width}`,
        member.id, undefined, 'shape',
      )
    }
  }
  let renormalized = 0
  for (const member of loaded) {
    renormalized += normalizeProbabilities(member, spec.numClasses)
  }
  const gtArrays = spec.gt.map((p) => loadGtMask(p, spec.numClasses, height, width))

  mkdirSync(outDir, { recursive: true })
  const memberPaths: string[] = []
  loaded.forEach((member, k) => {
    const rel = `member_${k}.npy`
    writeNpy(join(outDir, rel), {
      dtype: '<f4',
      shape: [height, width, spec.numClasses],
      data: member.values,
    })
    memberPaths.push(rel)
  })
  const gtPaths: string[] = []
  if (gtArrays.length > 0) {
    mkdirSync(join(outDir, 'gt'), { recursive: true })
    gtArrays.forEach((arr, i) => {
      const rel = `gt/${String(i).padStart(4, '0')}.npy`
      writeNpy(join(outDir, rel), arr)
      gtPaths.push(rel)
    })
  }

  const manifest = {
    format_version: 1,
    num_classes: spec.numClasses,
    members: spec.members.map((m, k) => ({ id: m.id, path: memberPaths[k] })),
    gt: gtPaths,
  }
  writeFileSync(join(outDir, 'ensemble.json'), JSON.stringify(manifest, null, 2) + '\n')
  return { outDir, memberPaths, gtPaths, renormalizedPixels: renormalized }
}
