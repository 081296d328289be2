/**
 * Feature exporter CLI.
 *
 * Reads the engine's pseudo-label file, fine-tunes the backbone head on the
 * labeled photos (crop/flip augmentation optional), then runs center-crop
 * inference over EVERY image in the root - the retrieval pipeline needs
 * features for unlabeled photos too - and writes penultimate-layer features
 * in the MQLF codec plus a sidecar report of skipped images.
 *
 *   node dist/export.js --images <dir> --labels <file> --out <file>
 *        [--width 4096] [--epochs 8] [--batch 32] [--input-size 64]
 *        [--no-augment] [--backbone <dir>] [--classes C] [--seed 0]
 */

import * as tf from '@tensorflow/tfjs'
import { readdirSync, writeFileSync } from 'fs'
import { join } from 'path'
import { Backbone, buildBackbone, penultimate } from './backbone.js'
import { encodeFeatures } from './codec.js'
import { trainHead } from './finetune.js'
import { augmentedCrops, centerCrop, loadPng, Raster } from './images.js'
import { readPseudoLabels } from './labels.js'

export interface ExportJob {
  imageRoot: string
  labelsPath: string
  outPath: string
  width: number
  epochs: number
  batchSize: number
  inputSize: number
  augment: boolean
  backbonePath?: string
  expectedClasses?: number
  seed: number
  reportPath?: string
}

export interface ExportResult {
  exported: number
  dimension: number
  skipped: string[]
  lossTrace: number[]
}

function rasterToTensor(crops: Raster[], size: number): tf.Tensor4D {
  const batch = new Float32Array(crops.length * size * size * 3)
  crops.forEach((c, i) => batch.set(c.data, i * size * size * 3))
  return tf.tensor4d(batch, [crops.length, size, size, 3])
}

export async function exportFeatures(job: ExportJob): Promise<ExportResult> {
  const { labels, classCount } = readPseudoLabels(job.labelsPath)
  if (classCount < 2) {
    throw new Error(`need at least 2 pseudo-classes, got ${classCount}`)
  }
  if (job.expectedClasses !== undefined && job.expectedClasses !== classCount) {
    throw new Error(
      `class count mismatch: labels carry ${classCount}, expected ${job.expectedClasses}`,
    )
  }
  const backbone = await buildBackbone({
    inputSize: job.inputSize,
    penultimateWidth: job.width,
    classCount,
    seed: job.seed,
    backbonePath: job.backbonePath,
  })

  // deterministic order: every image in the root plus every labeled id,
  // sorted; labeled-but-unreadable photos land in the sidecar report
  const inRoot = readdirSync(job.imageRoot)
    .filter(name => name.endsWith('.png'))
    .map(name => name.slice(0, -4))
  const photoIds = [...new Set([...inRoot, ...labels.keys()])].sort()
  const skipped: string[] = []
  const readable: string[] = []
  const rasters = new Map<string, Raster>()
  for (const pid of photoIds) {
    try {
      rasters.set(pid, loadPng(join(job.imageRoot, `${pid}.png`)))
      readable.push(pid)
    } catch {
      skipped.push(pid)
    }
  }
  if (skipped.length) {
    console.warn(`warning: skipped ${skipped.length} unreadable photos`)
  }
  const trainIds = readable.filter(pid => labels.has(pid))
  if (trainIds.length === 0) throw new Error('no readable labeled images')

  // frozen-stem features for the training crops, computed once
  const trainRows: tf.Tensor2D[] = []
  const trainLabels: number[] = []
  for (const pid of trainIds) {
    const img = rasters.get(pid)!
    const crops = job.augment
      ? augmentedCrops(img, job.inputSize)
      : [centerCrop(img, job.inputSize)]
    const stemOut = tf.tidy(() => {
      const batch = rasterToTensor(crops, job.inputSize)
      return backbone.stem.predict(batch) as tf.Tensor2D
    })
    trainRows.push(stemOut)
    for (let i = 0; i < crops.length; i++) trainLabels.push(labels.get(pid)!)
  }
  const stemFeatures = tf.concat2d(trainRows, 0)
  trainRows.forEach(t => t.dispose())

  const stats = trainHead(
    backbone,
    { stemFeatures, labels: Int32Array.from(trainLabels) },
    job.epochs,
    job.batchSize,
    job.seed,
  )
  stemFeatures.dispose()

  // center-crop inference, one row per readable photo
  const values = new Float32Array(readable.length * job.width)
  for (let i = 0; i < readable.length; i++) {
    const img = rasters.get(readable[i])!
    const row = tf.tidy(() => {
      const batch = rasterToTensor([centerCrop(img, job.inputSize)], job.inputSize)
      const stemOut = backbone.stem.predict(batch) as tf.Tensor2D
      return penultimate(backbone, stemOut)
    })
    values.set(row.dataSync() as Float32Array, i * job.width)
    row.dispose()
  }

  writeFileSync(
    job.outPath,
    encodeFeatures({ photoIds: readable, values, dimension: job.width }),
  )
  if (job.reportPath) {
    writeFileSync(
      job.reportPath,
      JSON.stringify(
        {
          exported: readable.length,
          dimension: job.width,
          classes: classCount,
          skipped,
          finalLoss: stats.lossTrace[stats.lossTrace.length - 1] ?? null,
        },
        null,
        1,
      ) + '\n',
    )
  }
  return {
    exported: readable.length,
    dimension: job.width,
    skipped,
    lossTrace: stats.lossTrace,
  }
}

function parseArgs(argv: string[]): ExportJob {
  const opts = new Map<string, string>()
  const flags = new Set<string>()
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i]
    if (!arg.startsWith('--')) throw new Error(`unexpected argument ${arg}`)
    const key = arg.slice(2)
    if (key === 'no-augment' || key === 'augment') {
      flags.add(key)
    } else {
      opts.set(key, argv[++i])
    }
  }
  const need = (key: string): string => {
    const value = opts.get(key)
    if (value === undefined) throw new Error(`missing required --${key}`)
    return value
  }
  return {
    imageRoot: need('images'),
    labelsPath: need('labels'),
    outPath: need('out'),
    width: Number(opts.get('width') ?? 4096),
    epochs: Number(opts.get('epochs') ?? 8),
    batchSize: Number(opts.get('batch') ?? 32),
    inputSize: Number(opts.get('input-size') ?? 64),
    augment: !flags.has('no-augment'),
    backbonePath: opts.get('backbone'),
    expectedClasses: opts.has('classes') ? Number(opts.get('classes')) : undefined,
    seed: Number(opts.get('seed') ?? 0),
    reportPath: opts.get('report'),
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url.endsWith(process.argv[1].split('/').pop() ?? '')

if (invokedDirectly) {
  exportFeatures(parseArgs(process.argv.slice(2)))
    .then(result => {
      console.log(
        `exported ${result.exported} photos x ${result.dimension} dims` +
          (result.skipped.length ? ` (${result.skipped.length} skipped)` : ''),
      )
    })
    .catch(err => {
      console.error(`export failed: ${err.message}`)
      process.exit(1)
    })
}
