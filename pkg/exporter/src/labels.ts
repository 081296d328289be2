/** Pseudo-label file reader: `photo_id\tclass_index` lines, `#` comments. */

import { readFileSync } from 'fs'

export interface PseudoLabels {
  labels: Map<string, number>
  classCount: number
}

export function readPseudoLabels(path: string): PseudoLabels {
  const labels = new Map<string, number>()
  const text = readFileSync(path, 'utf8')
  let maxClass = -1
  text.split('\n').forEach((line, idx) => {
    const stripped = line.trim()
    if (!stripped || stripped.startsWith('#')) return
    const parts = stripped.split('\t')
    if (parts.length !== 2) {
      throw new Error(`pseudo-label line ${idx + 1}: malformed record ${line}`)
    }
    const cls = Number(parts[1])
    if (!Number.isInteger(cls) || cls < 0) {
      throw new Error(`pseudo-label line ${idx + 1}: bad class index ${parts[1]}`)
    }
    labels.set(parts[0], cls)
    maxClass = Math.max(maxClass, cls)
  })
  if (labels.size === 0) throw new Error('empty pseudo-label file')
  return { labels, classCount: maxClass + 1 }
}
