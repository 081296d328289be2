/**
 * Backbone construction: a frozen convolutional stack with two trainable
 * fully-connected layers on top (penultimate + classifier).
 *
 * A real pretrained layers-model can be supplied from disk; without one, a
 * bundled stand-in is built whose convolutional weights come from a fixed
 * seed and stay frozen, mirroring the frozen/fine-tuned split. Only the two
 * dense layers ever train.
 */

import * as tf from '@tensorflow/tfjs'
import { readFileSync } from 'fs'
import { join } from 'path'

export interface BackboneSpec {
  inputSize: number
  penultimateWidth: number
  classCount: number
  seed: number
  backbonePath?: string
}

export interface Backbone {
  /** frozen feature stack: image batch -> flat feature batch */
  stem: tf.LayersModel
  /** trainable head variables */
  w1: tf.Variable<tf.Rank.R2>
  b1: tf.Variable<tf.Rank.R1>
  w2: tf.Variable<tf.Rank.R2>
  b2: tf.Variable<tf.Rank.R1>
  inputSize: number
  penultimateWidth: number
  classCount: number
}

/** Minimal IOHandler so layers models can load from disk without tfjs-node. */
export function diskLoadHandler(dir: string): tf.io.IOHandler {
  return {
    load: async () => {
      const modelJson = JSON.parse(readFileSync(join(dir, 'model.json'), 'utf8'))
      const weightData = readFileSync(join(dir, 'weights.bin'))
      const weightSpecs = modelJson.weightsManifest.flatMap(
        (group: { weights: tf.io.WeightsManifestEntry[] }) => group.weights,
      )
      return {
        modelTopology: modelJson.modelTopology,
        weightSpecs,
        weightData: weightData.buffer.slice(
          weightData.byteOffset,
          weightData.byteOffset + weightData.byteLength,
        ),
      }
    },
  }
}

function buildStem(spec: BackboneSpec): tf.LayersModel {
  const model = tf.sequential()
  const filters = [16, 32, 64]
  filters.forEach((f, i) => {
    model.add(
      tf.layers.conv2d({
        inputShape: i === 0 ? [spec.inputSize, spec.inputSize, 3] : undefined,
        filters: f,
        kernelSize: 3,
        strides: 2,
        padding: 'same',
        activation: 'relu',
        trainable: false,
        kernelInitializer: tf.initializers.glorotUniform({ seed: spec.seed + i }),
        biasInitializer: 'zeros',
      }),
    )
  })
  model.add(tf.layers.flatten())
  return model
}

export async function buildBackbone(spec: BackboneSpec): Promise<Backbone> {
  let stem: tf.LayersModel
  if (spec.backbonePath) {
    const loaded = await tf.loadLayersModel(diskLoadHandler(spec.backbonePath))
    loaded.layers.forEach(layer => (layer.trainable = false))
    stem = loaded
  } else {
    stem = buildStem(spec)
  }
  const probe = tf.zeros([1, spec.inputSize, spec.inputSize, 3])
  const stemOut = stem.predict(probe) as tf.Tensor
  const stemWidth = stemOut.shape[1] as number
  probe.dispose()
  stemOut.dispose()

  const init1 = tf.initializers.glorotUniform({ seed: spec.seed + 101 })
  const init2 = tf.initializers.glorotUniform({ seed: spec.seed + 202 })
  return {
    stem,
    w1: tf.variable(
      init1.apply([stemWidth, spec.penultimateWidth]) as tf.Tensor2D,
    ) as tf.Variable<tf.Rank.R2>,
    b1: tf.variable(tf.zeros([spec.penultimateWidth])) as tf.Variable<tf.Rank.R1>,
    w2: tf.variable(
      init2.apply([spec.penultimateWidth, spec.classCount]) as tf.Tensor2D,
    ) as tf.Variable<tf.Rank.R2>,
    b2: tf.variable(tf.zeros([spec.classCount])) as tf.Variable<tf.Rank.R1>,
    inputSize: spec.inputSize,
    penultimateWidth: spec.penultimateWidth,
    classCount: spec.classCount,
  }
}

/** Penultimate activations for a batch of flat stem features. */
export function penultimate(backbone: Backbone, stemFeatures: tf.Tensor2D): tf.Tensor2D {
  return tf.tidy(() =>
    stemFeatures.matMul(backbone.w1).add(backbone.b1).relu(),
  ) as tf.Tensor2D
}

export function logits(backbone: Backbone, stemFeatures: tf.Tensor2D): tf.Tensor2D {
  return tf.tidy(() =>
    penultimate(backbone, stemFeatures).matMul(backbone.w2).add(backbone.b2),
  ) as tf.Tensor2D
}
