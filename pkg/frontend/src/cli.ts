#!/usr/bin/env node
/**
 * plume-extract: run a frozen backbone over an image dataset and write a
 * PLMF feature file plus its manifest.
 *
 *   plume-extract --dataset cifar10 --input data_batch_1.bin \
 *       --backbone demo --dim 3072 --out train.plmf
 *
 * Datasets: cifar10 / cifar100 binary batches, or plmf (pre-decoded pixel
 * rows with labels, reshaped via --height/--width/--channels).
 */

import { parseArgs } from 'util'

import { loadBackbone } from './backbone'
import { IMAGE_SIZE, CHANNELS, LabeledImage, readCifarBatch } from './cifar10'
import { runJob } from './extractor'
import { readPlmf } from './plmf'

const DATASETS = ['cifar10', 'cifar100', 'plmf'] as const
const DTYPES = ['f32', 'f64'] as const

type Dataset = (typeof DATASETS)[number]
type Dtype = (typeof DTYPES)[number]

interface CliArgs {
  dataset: Dataset
  input: string[]
  backbone: string
  dim: number
  out: string
  manifest?: string
  batchSize: number
  normalize: boolean
  dtype: Dtype
  height: number
  width: number
  channels: number
}

function asInt(name: string, raw: string): number {
  const value = Number(raw)
  if (!Number.isInteger(value) || value <= 0) {
    throw new Error(`--${name} must be a positive integer, got ${raw}`)
  }
  return value
}

function asChoice<T extends string>(name: string, raw: string, choices: readonly T[]): T {
  if (!(choices as readonly string[]).includes(raw)) {
    throw new Error(`--${name} must be one of ${choices.join(', ')}, got ${raw}`)
  }
  return raw as T
}

export function parseCliArgs(argv: string[]): CliArgs {
  const { values } = parseArgs({
    args: argv,
    options: {
      dataset: { type: 'string', default: 'cifar10' },
      input: { type: 'string', multiple: true },
      backbone: { type: 'string', default: 'demo' },
      dim: { type: 'string', default: '3072' },
      out: { type: 'string' },
      manifest: { type: 'string' },
      'batch-size': { type: 'string', default: '64' },
      normalize: { type: 'boolean', default: false },
      dtype: { type: 'string', default: 'f64' },
      height: { type: 'string', default: String(IMAGE_SIZE) },
      width: { type: 'string', default: String(IMAGE_SIZE) },
      channels: { type: 'string', default: String(CHANNELS) },
    },
  })
  if (!values.input || values.input.length === 0) {
    throw new Error('--input is required')
  }
  if (!values.out) {
    throw new Error('--out is required')
  }
  return {
    dataset: asChoice('dataset', values.dataset!, DATASETS),
    input: values.input,
    backbone: values.backbone!,
    dim: asInt('dim', values.dim!),
    out: values.out,
    manifest: values.manifest,
    batchSize: asInt('batch-size', values['batch-size']!),
    normalize: values.normalize!,
    dtype: asChoice('dtype', values.dtype!, DTYPES),
    height: asInt('height', values.height!),
    width: asInt('width', values.width!),
    channels: asInt('channels', values.channels!),
  }
}

function pixelRowsFromPlmf(path: string, pixelCount: number): LabeledImage[] {
  const ds = readPlmf(path)
  if (ds.dim !== pixelCount) {
    throw new Error(`${path}: rows have ${ds.dim} values, expected ${pixelCount}`)
  }
  const images: LabeledImage[] = []
  for (let i = 0; i < ds.count; i++) {
    images.push({
      pixels: Float32Array.from(ds.features.subarray(i * ds.dim, (i + 1) * ds.dim)),
      label: ds.labels[i],
    })
  }
  return images
}

export async function main(argv: string[]): Promise<number> {
  const args = parseCliArgs(argv)
  const shape: [number, number, number] = [args.height, args.width, args.channels]
  let images: LabeledImage[] = []
  for (const path of args.input) {
    if (args.dataset === 'plmf') {
      images = images.concat(pixelRowsFromPlmf(path, shape[0] * shape[1] * shape[2]))
    } else {
      images = images.concat(readCifarBatch(path, args.dataset === 'cifar100' ? 2 : 1))
    }
  }
  if (images.length === 0) {
    throw new Error('no input images')
  }

  const backbone = await loadBackbone(args.backbone, shape)
  const manifest = runJob(
    {
      backbone,
      images,
      imageShape: shape,
      targetDim: args.dim,
      batchSize: args.batchSize,
      normalize: args.normalize,
      dtype: args.dtype,
    },
    args.out,
    args.manifest ?? `${args.out}.manifest.json`,
  )
  console.log(
    `wrote ${manifest.count} x ${manifest.targetDim} features to ${args.out} ` +
      `(backbone ${manifest.backbone}, weights ${manifest.weightsSha256.slice(0, 12)})`,
  )
  return 0
}

if (require.main === module) {
  main(process.argv.slice(2)).then(
    code => process.exit(code),
    err => {
      console.error(`error: ${err.message}`)
      process.exit(2)
    },
  )
}
