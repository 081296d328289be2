/**
 * Head fine-tuning on pseudo-classes with a staged learning-rate ladder.
 *
 * The frozen stem runs once per training crop (features are cached); the two
 * dense layers then train with per-layer step sizes over four stages:
 * (1e-1, 1e-4) -> (1e-3, 1e-4) -> (1e-4, 1e-4) -> (1e-5, 1e-5), each pair
 * being (classifier lr, penultimate lr).
 */

import * as tf from '@tensorflow/tfjs'
import { Backbone, logits } from './backbone.js'

export const LR_LADDER: Array<[number, number]> = [
  [1e-1, 1e-4],
  [1e-3, 1e-4],
  [1e-4, 1e-4],
  [1e-5, 1e-5],
]

const MASK32 = 0xffffffff

/** Deterministic shuffle (32-bit LCG), independent of tf's RNG. */
export function seededShuffle(n: number, seed: number): number[] {
  const order = Array.from({ length: n }, (_, i) => i)
  let state = (seed >>> 0) || 1
  const next = () => {
    state = (Math.imul(state, 1664525) + 1013904223) & MASK32
    return (state >>> 0) / 2 ** 32
  }
  for (let i = n - 1; i > 0; i--) {
    const j = Math.floor(next() * (i + 1))
    ;[order[i], order[j]] = [order[j], order[i]]
  }
  return order
}

export interface TrainingSet {
  stemFeatures: tf.Tensor2D // (n, stemWidth), frozen-stack outputs
  labels: Int32Array
}

export interface TrainStats {
  lossTrace: number[]
}

export function trainHead(
  backbone: Backbone,
  data: TrainingSet,
  epochs: number,
  batchSize: number,
  seed: number,
): TrainStats {
  const n = data.labels.length
  const stages = LR_LADDER.length
  const perStage = Math.max(1, Math.ceil(epochs / stages))
  const lossTrace: number[] = []
  const labelTensor = tf.tensor1d(Array.from(data.labels), 'int32')

  let epoch = 0
  for (let stage = 0; stage < stages && epoch < epochs; stage++) {
    const [lrLast, lrHidden] = LR_LADDER[stage]
    for (let e = 0; e < perStage && epoch < epochs; e++, epoch++) {
      const order = seededShuffle(n, seed + epoch * 7919)
      for (let start = 0; start < n; start += batchSize) {
        const idx = order.slice(start, start + batchSize)
        const batch = tf.tidy(() => {
          const rows = tf.gather(data.stemFeatures, idx)
          const ys = tf.gather(labelTensor, idx)
          return { rows, ys }
        })
        const { grads } = tf.variableGrads(
          () =>
            tf.tidy(() =>
              tf.losses
                .softmaxCrossEntropy(
                  tf.oneHot(batch.ys, backbone.classCount),
                  logits(backbone, batch.rows as tf.Tensor2D),
                )
                .asScalar(),
            ),
          [backbone.w1, backbone.b1, backbone.w2, backbone.b2] as tf.Variable[],
        )
        tf.tidy(() => {
          const lrOf = (name: string) =>
            name === backbone.w2.name || name === backbone.b2.name
              ? lrLast
              : lrHidden
          for (const [name, grad] of Object.entries(grads)) {
            const target = [backbone.w1, backbone.b1, backbone.w2, backbone.b2].find(
              v => v.name === name,
            )
            if (target) target.assign(target.sub(grad.mul(lrOf(name))) as never)
          }
        })
        Object.values(grads).forEach(g => g.dispose())
        batch.rows.dispose()
        batch.ys.dispose()
      }
      const epochLoss = tf.tidy(() =>
        tf.losses
          .softmaxCrossEntropy(
            tf.oneHot(labelTensor, backbone.classCount),
            logits(backbone, data.stemFeatures),
          )
          .asScalar()
          .arraySync(),
      )
      if (!Number.isFinite(epochLoss)) {
        labelTensor.dispose()
        throw new Error(`training loss diverged at epoch ${epoch}`)
      }
      lossTrace.push(epochLoss)
    }
  }
  labelTensor.dispose()
  return { lossTrace }
}
