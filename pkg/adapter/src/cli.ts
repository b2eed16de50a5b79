#!/usr/bin/env node
/**
 * mpsuq-export --spec spec.json --out dir
 *
 * Exit codes mirror the core CLI: 0 ok, 2 usage, 3 validation or
 * rejected input, 4 I/O.
 */

import { ExportError, SpecError, parseSpec, runExport } from './export.js'
import { NpyFormatError } from './npy.js'

function usage(): void {
  console.error('usage: mpsuq-export --spec <spec.json> --out <directory>')
}

export function main(argv: string[]): number {
  let specPath: string | undefined
  let outDir: string | undefined
  for (let i = 0; i < argv.length; i++) {
    switch (argv[i]) {
      case '--spec':
        specPath = argv[++i]
        break
      case '--out':
        outDir = argv[++i]
        break
      case '--help':
      case '-h':
        usage()
        return 0
      default:
        console.error(`mpsuq-export: unknown argument ${argv[i]}`)
        usage()
        return 2
    }
  }
  if (!specPath || !outDir) {
    usage()
    return 2
  }

  try {
    const spec = parseSpec(specPath)
    const result = runExport(spec, outDir)
    console.log(
      `exported ${result.memberPaths.length} members` +
        (result.gtPaths.length ? ` and ${result.gtPaths.length} masks` : '') +
        ` to ${result.outDir}` +
        (result.renormalizedPixels ? ` (${result.renormalizedPixels} pixels renormalized)` : ''),
    )
    return 0
  } catch (err) {
    if (err instanceof ExportError || err instanceof SpecError) {
      console.error(`mpsuq-export: error: validation: ${err.message}`)
      return 3
    }
    if (err instanceof NpyFormatError) {
      console.error(`mpsuq-export: error: format: ${err.message}`)
      return 4
    }
    if (err instanceof Error && 'code' in err) {
      console.error(`mpsuq-export: error: io: ${err.message}`)
      return 4
    }
    throw err
  }
}

process.exit(main(process.argv.slice(2)))
