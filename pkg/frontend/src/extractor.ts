/**
 * Extraction pipeline: frozen backbone forward to the penultimate feature,
 * flatten, adaptive average-pool to exactly the target dim, optional
 * per-dimension standardization, then PLMF output plus a JSON manifest
 * recording everything needed to reproduce the rows bit for bit.
 */

import { writeFileSync } from 'fs'
import * as tf from '@tensorflow/tfjs'

import { Backbone } from './backbone'
import { LabeledImage } from './cifar10'
import { NormalizeStats, applyNormalize, fitNormalizeStats } from './normalize'
import { FeatureDataset, PlmfDtype, writePlmf } from './plmf'
import { adaptiveAvgPool } from './pooling'

export const POOLING_MODE = 'adaptive-average-flatten'

export interface ExtractionJob {
  backbone: Backbone
  images: LabeledImage[]
  imageShape: [number, number, number]
  targetDim: number
  batchSize?: number
  normalize?: boolean
  dtype?: PlmfDtype
}

export interface Manifest {
  format: 'PLMF'
  backbone: string
  weightsSha256: string
  poolingMode: string
  targetDim: number
  dtype: PlmfDtype
  count: number
  normalize: NormalizeStats | null
  libraryVersions: { tfjs: string; node: string }
}

export function extractFeatures(job: ExtractionJob): FeatureDataset {
  const { backbone, images, imageShape, targetDim } = job
  const batchSize = job.batchSize ?? 64
  const [h, w, c] = imageShape
  const features = new Float64Array(images.length * targetDim)
  const labels = new Int32Array(images.length)

  for (let start = 0; start < images.length; start += batchSize) {
    const batch = images.slice(start, start + batchSize)
    const pixels = new Float32Array(batch.length * h * w * c)
    batch.forEach((image, i) => {
      if (image.pixels.length !== h * w * c) {
        throw new Error(
          `image ${start + i} has ${image.pixels.length} values, expected ${h * w * c}`,
        )
      }
      pixels.set(image.pixels, i * h * w * c)
      labels[start + i] = image.label
    })
    const flat = tf.tidy(() => {
      const input = tf.tensor4d(pixels, [batch.length, h, w, c])
      const out = backbone.model.predict(input, { batchSize: batch.length }) as tf.Tensor
      return out.reshape([batch.length, -1])
    })
    const rows = flat.arraySync() as number[][]
    flat.dispose()
    rows.forEach((row, i) => {
      features.set(adaptiveAvgPool(row, targetDim), (start + i) * targetDim)
    })
  }
  return { features, labels, count: images.length, dim: targetDim }
}

export function runJob(job: ExtractionJob, outPath: string, manifestPath: string): Manifest {
  let dataset = extractFeatures(job)
  let stats: NormalizeStats | null = null
  if (job.normalize) {
    stats = fitNormalizeStats(dataset.features, dataset.count, dataset.dim)
    dataset = {
      ...dataset,
      features: applyNormalize(dataset.features, dataset.count, dataset.dim, stats),
    }
  }
  const dtype = job.dtype ?? 'f64'
  writePlmf(outPath, dataset, dtype)
  const manifest: Manifest = {
    format: 'PLMF',
    backbone: job.backbone.id,
    weightsSha256: job.backbone.weightsSha256,
    poolingMode: POOLING_MODE,
    targetDim: job.targetDim,
    dtype,
    count: dataset.count,
    normalize: stats,
    libraryVersions: { tfjs: tf.version.tfjs, node: process.version },
  }
  writeFileSync(manifestPath, JSON.stringify(manifest, null, 2) + '\n')
  return manifest
}
