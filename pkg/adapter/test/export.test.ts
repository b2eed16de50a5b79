import assert from 'node:assert/strict'
import { spawnSync } from 'node:child_process'
import { existsSync, mkdtempSync, readFileSync, writeFileSync } from 'node:fs'
import { tmpdir } from 'node:os'
import { join } from 'node:path'
import { test } from 'node:test'

import { ExportError, parseSpec, runExport } from '../src/export.js'
import { readNpy, writeNpy } from '../src/npy.js'

const H = 6
const W = 5
const C = 3

function scratch(): string {
  return mkdtempSync(join(tmpdir(), 'export-'))
}

/** Random C-first f32 probability stack whose pixel sums are exact in f32. */
function makeChwMember(seed: number): Float32Array {
  const values = new Float32Array(C * H * W)
  let state = seed
  const next = () => {
    state = (state * 1103515245 + 12345) & 0x7fffffff
    return state / 0x7fffffff
  }
  for (let p = 0; p < H * W; p++) {
    // dyadic class probabilities in units of 1/64 keep every f32 sum exactly 1
    let remaining = 64
    const parts: number[] = []
    for (let cls = 0; cls < C - 1; cls++) {
      const take = Math.min(remaining, Math.floor(next() * remaining))
      parts.push(take)
      remaining -= take
    }
    parts.push(remaining)
    for (let cls = 0; cls < C; cls++) {
      values[cls * H * W + p] = parts[cls] / 64
    }
  }
  return values
}

function writeScenario(dir: string, members: Float32Array[], gt = true) {
  const spec = {
    format_version: 1,
    num_classes: C,
    axis_order: 'chw',
    members: members.map((_, k) => ({ id: `ckpt-${k}`, path: `in_${k}.npy` })),
    gt: gt ? ['truth.npy'] : [],
  }
  members.forEach((data, k) => {
    writeNpy(join(dir, `in_${k}.npy`), { dtype: '<f4', shape: [C, H, W], data })
  })
  if (gt) {
    const labels = new Uint8Array(H * W)
    for (let p = 0; p < labels.length; p++) labels[p] = p % C
    writeNpy(join(dir, 'truth.npy'), { dtype: '|u1', shape: [H, W], data: labels })
  }
  writeFileSync(join(dir, 'spec.json'), JSON.stringify(spec))
  return join(dir, 'spec.json')
}

test('export transposes C-first stacks bit-for-bit', () => {
  const dir = scratch()
  const members = [makeChwMember(1), makeChwMember(2), makeChwMember(3)]
  const specPath = writeScenario(dir, members)
  const out = join(dir, 'out')
  const result = runExport(parseSpec(specPath), out)

  assert.deepEqual(result.memberPaths, ['member_0.npy', 'member_1.npy', 'member_2.npy'])
  assert.equal(result.renormalizedPixels, 0)

  for (let k = 0; k < members.length; k++) {
    const exported = readNpy(join(out, `member_${k}.npy`))
    assert.deepEqual(exported.shape, [H, W, C])
    const data = exported.data as Float32Array
    for (let cls = 0; cls < C; cls++) {
      for (let p = 0; p < H * W; p++) {
        const source = members[k][cls * H * W + p]
        const got = data[p * C + cls]
        assert.ok(Object.is(source, got), `member ${k} class ${cls} pixel ${p}`)
      }
    }
  }

  const manifest = JSON.parse(readFileSync(join(out, 'ensemble.json'), 'utf8'))
  assert.equal(manifest.format_version, 1)
  assert.equal(manifest.num_classes, C)
  assert.deepEqual(manifest.gt, ['gt/0000.npy'])
  assert.deepEqual(
    manifest.members.map((m: { id: string }) => m.id),
    ['ckpt-0', 'ckpt-1', 'ckpt-2'],
  )

  const mask = readNpy(join(out, 'gt', '0000.npy'))
  assert.equal(mask.dtype, '|u1')
  assert.deepEqual(mask.shape, [H, W])
})

test('hwc input passes through untouched', () => {
  const dir = scratch()
  const flat = new Float32Array(H * W * C)
  for (let p = 0; p < H * W; p++) {
    flat[p * C] = 0.5
    flat[p * C + 1] = 0.25
    flat[p * C + 2] = 0.25
  }
  writeNpy(join(dir, 'in.npy'), { dtype: '<f4', shape: [H, W, C], data: flat })
  const spec = {
    format_version: 1,
    num_classes: C,
    axis_order: 'hwc',
    members: [{ id: 'only', path: 'in.npy' }],
  }
  writeFileSync(join(dir, 'spec.json'), JSON.stringify(spec))
  const out = join(dir, 'out')
  runExport(parseSpec(join(dir, 'spec.json')), out)
  const exported = readNpy(join(out, 'member_0.npy'))
  assert.deepEqual(
    Buffer.from(exported.data.buffer, exported.data.byteOffset, exported.data.byteLength),
    Buffer.from(flat.buffer),
  )
})

test('slightly drifted sums are renormalized, ok pixels untouched', () => {
  const dir = scratch()
  const member = makeChwMember(5)
  // pixel 7 drifts by 5e-4: repairable
  member[0 * H * W + 7] = Math.fround(member[0 * H * W + 7] + 5e-4)
  const specPath = writeScenario(dir, [member], false)
  const out = join(dir, 'out')
  const result = runExport(parseSpec(specPath), out)
  assert.equal(result.renormalizedPixels, 1)

  const exported = readNpy(join(out, 'member_0.npy')).data as Float32Array
  let sum = 0
  for (let cls = 0; cls < C; cls++) sum += exported[7 * C + cls]
  assert.ok(Math.abs(sum - 1) <= 1e-6, `repaired sum ${sum}`)
  // a different pixel keeps its exact bits
  for (let cls = 0; cls < C; cls++) {
    assert.ok(Object.is(exported[3 * C + cls], member[cls * H * W + 3]))
  }
})

test('sums beyond 1e-3 are rejected with the pixel named', () => {
  const dir = scratch()
  const member = makeChwMember(6)
  member[0 * H * W + 11] = Math.fround(member[0 * H * W + 11] + 0.01)
  const specPath = writeScenario(dir, [member], false)
  try {
    runExport(parseSpec(specPath), join(dir, 'out'))
    assert.fail('expected rejection')
  } catch (err) {
    assert.ok(err instanceof ExportError)
    assert.equal(err.pixel, 11)
    assert.equal(err.member, 'ckpt-0')
    assert.equal(err.violation, 'sum')
  }
})

test('non-finite values are rejected', () => {
  const dir = scratch()
  const member = makeChwMember(7)
  member[2 * H * W + 4] = Number.NaN
  const specPath = writeScenario(dir, [member], false)
  assert.throws(() => runExport(parseSpec(specPath), join(dir, 'out')), /non-finite/)
})

test('axis order mismatch is detected', () => {
  const dir = scratch()
  const member = new Float32Array(4 * H * W) // 4 "classes" vs declared 3
  writeNpy(join(dir, 'in_0.npy'), { dtype: '<f4', shape: [4, H, W], data: member })
  const spec = {
    format_version: 1,
    num_classes: C,
    axis_order: 'chw',
    members: [{ id: 'bad', path: 'in_0.npy' }],
  }
  writeFileSync(join(dir, 'spec.json'), JSON.stringify(spec))
  assert.throws(() => runExport(parseSpec(join(dir, 'spec.json')), join(dir, 'out')), /axis_order/)
})

test('gt labels outside the class range are rejected', () => {
  const dir = scratch()
  const member = makeChwMember(8)
  const specPath = writeScenario(dir, [member], true)
  const labels = new Uint8Array(H * W)
  labels[9] = C // out of range
  writeNpy(join(dir, 'truth.npy'), { dtype: '|u1', shape: [H, W], data: labels })
  try {
    runExport(parseSpec(specPath), join(dir, 'out'))
    assert.fail('expected rejection')
  } catch (err) {
    assert.ok(err instanceof ExportError)
    assert.equal(err.pixel, 9)
    assert.equal(err.violation, 'label-range')
  }
})

test('cli entry rejects missing arguments with exit 2', () => {
  const proc = spawnSync('node', [new URL('../src/cli.js', import.meta.url).pathname], {
    encoding: 'utf8',
  })
  assert.equal(proc.status, 2)
})

test('core CLI ingests an exported layout end to end', () => {
  const dir = scratch()
  const members = [makeChwMember(11), makeChwMember(12), makeChwMember(13)]
  const specPath = writeScenario(dir, members)
  const out = join(dir, 'out')

  const exportProc = spawnSync(
    'node',
    [new URL('../src/cli.js', import.meta.url).pathname, '--spec', specPath, '--out', out],
    { encoding: 'utf8' },
  )
  assert.equal(exportProc.status, 0, exportProc.stderr)

  const inferDir = join(dir, 'infer')
  const infer = spawnSync(
    'python3',
    ['-m', 'mpsuq', 'infer', '--members', join(out, 'ensemble.json'), '--out', inferDir],
    { encoding: 'utf8' },
  )
  assert.equal(infer.status, 0, infer.stderr)
  assert.ok(existsSync(join(inferDir, '0000', 'mask.npy')))
  assert.ok(existsSync(join(inferDir, '0000', 'entropy.npy')))

  const evalDir = join(dir, 'eval')
  const evalProc = spawnSync(
    'python3',
    ['-m', 'mpsuq', 'eval', '--pred', inferDir, '--gt', join(out, 'gt'), '--out', evalDir],
    { encoding: 'utf8' },
  )
  assert.equal(evalProc.status, 0, evalProc.stderr)
  const metrics = JSON.parse(readFileSync(join(evalDir, 'metrics.json'), 'utf8'))
  assert.equal(metrics.per_image.length, 1)
})

test('single-member export survives the core mean bit-for-bit', () => {
  const dir = scratch()
  const member = makeChwMember(21)
  const specPath = writeScenario(dir, [member])
  const out = join(dir, 'out')
  runExport(parseSpec(specPath), out)

  const inferDir = join(dir, 'infer')
  const infer = spawnSync(
    'python3',
    ['-m', 'mpsuq', 'infer', '--members', join(out, 'ensemble.json'), '--out', inferDir],
    { encoding: 'utf8' },
  )
  assert.equal(infer.status, 0, infer.stderr)

  // the single-member ensemble mean is the member itself, so the core's
  // f32 mean output must reproduce the source bits after permutation
  const mean = readNpy(join(inferDir, '0000', 'mean.npy')).data as Float32Array
  for (let cls = 0; cls < C; cls++) {
    for (let p = 0; p < H * W; p++) {
      assert.ok(Object.is(mean[p * C + cls], member[cls * H * W + p]), `class ${cls} pixel ${p}`)
    }
  }
})

test('rejected exports leave exit code 3 at the cli', () => {
  const dir = scratch()
  const member = makeChwMember(31)
  member[5] = Math.fround(member[5] + 0.01) // pixel 5 sum off by 1e-2
  const specPath = writeScenario(dir, [member], false)
  const proc = spawnSync(
    'node',
    [new URL('../src/cli.js', import.meta.url).pathname, '--spec', specPath, '--out', join(dir, 'out')],
    { encoding: 'utf8' },
  )
  assert.equal(proc.status, 3)
  assert.match(proc.stderr, /pixel 5/)
})
