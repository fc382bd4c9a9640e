/**
 * Frozen backbone handling.  A backbone is any tfjs layers model; extraction
 * reads the penultimate layer's activation (the feature head, not the class
 * logits).  The built-in demo backbone is a small seeded conv net so the
 * pipeline runs deterministically without downloading pretrained weights;
 * real backbones load from a tfjs model.json via `file://` or `http(s)://`.
 */

import { createHash } from 'crypto'
import * as tf from '@tensorflow/tfjs'

export interface Backbone {
  id: string
  /** maps an image batch to penultimate features */
  model: tf.LayersModel
  weightsSha256: string
}

export function freeze(model: tf.LayersModel) {
  for (const layer of model.layers) {
    layer.trainable = false
  }
  return model
}

export function weightsSha256(model: tf.LayersModel): string {
  const hash = createHash('sha256')
  for (const weight of model.getWeights()) {
    const data = weight.dataSync() as Float32Array
    hash.update(Buffer.from(data.buffer, data.byteOffset, data.byteLength))
  }
  return hash.digest('hex')
}

export function penultimate(model: tf.LayersModel): tf.LayersModel {
  if (model.layers.length < 2) {
    throw new Error('backbone needs at least two layers to have a penultimate output')
  }
  const featureLayer = model.layers[model.layers.length - 2]
  return tf.model({
    inputs: model.inputs,
    outputs: featureLayer.output as tf.SymbolicTensor,
  })
}

export function buildDemoBackbone(inputShape: [number, number, number], seed = 7): tf.LayersModel {
  const model = tf.sequential()
  model.add(
    tf.layers.conv2d({
      inputShape,
      filters: 8,
      kernelSize: 3,
      activation: 'relu',
      kernelInitializer: tf.initializers.glorotUniform({ seed }),
      useBias: false,
    }),
  )
  model.add(tf.layers.maxPooling2d({ poolSize: 2 }))
  model.add(
    tf.layers.conv2d({
      filters: 16,
      kernelSize: 3,
      activation: 'relu',
      kernelInitializer: tf.initializers.glorotUniform({ seed: seed + 1 }),
      useBias: false,
    }),
  )
  model.add(tf.layers.maxPooling2d({ poolSize: 2 }))
  model.add(tf.layers.flatten())
  model.add(
    tf.layers.dense({
      units: 10,
      activation: 'softmax',
      kernelInitializer: tf.initializers.glorotUniform({ seed: seed + 2 }),
    }),
  )
  return model
}

export async function loadBackbone(
  spec: string,
  inputShape: [number, number, number],
): Promise<Backbone> {
  let full: tf.LayersModel
  if (spec === 'demo') {
    full = buildDemoBackbone(inputShape)
  } else {
    full = await tf.loadLayersModel(spec)
  }
  freeze(full)
  return {
    id: spec,
    model: freeze(penultimate(full)),
    weightsSha256: weightsSha256(full),
  }
}
