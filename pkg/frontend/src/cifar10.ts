/**
 * CIFAR-10/100 binary batch reader.  Each record is one label byte (two for
 * CIFAR-100: coarse then fine) followed by 3072 image bytes (32 x 32 x 3,
 * channel-planar R, G, B).  Pixel values are scaled to [0, 1] and reordered
 * to HWC so they feed a conv backbone directly.
 */

import { readFileSync } from 'fs'

export const IMAGE_BYTES = 32 * 32 * 3
export const IMAGE_SIZE = 32
export const CHANNELS = 3

export interface LabeledImage {
  /** 32 x 32 x 3 HWC pixels in [0, 1] */
  pixels: Float32Array
  label: number
}

export function decodeCifarRecord(record: Uint8Array, labelBytes = 1): LabeledImage {
  if (record.length !== labelBytes + IMAGE_BYTES) {
    throw new Error(
      `record has ${record.length} bytes, expected ${labelBytes + IMAGE_BYTES}`,
    )
  }
  // CIFAR-100 records carry [coarse, fine]; the fine label is the class
  const label = record[labelBytes - 1]
  const planar = record.subarray(labelBytes)
  const pixels = new Float32Array(IMAGE_BYTES)
  const plane = IMAGE_SIZE * IMAGE_SIZE
  for (let p = 0; p < plane; p++) {
    for (let c = 0; c < CHANNELS; c++) {
      pixels[p * CHANNELS + c] = planar[c * plane + p] / 255
    }
  }
  return { pixels, label }
}

export function readCifarBatch(path: string, labelBytes = 1): LabeledImage[] {
  const raw = readFileSync(path)
  const recordBytes = labelBytes + IMAGE_BYTES
  if (raw.length === 0 || raw.length % recordBytes !== 0) {
    throw new Error(
      `${path}: ${raw.length} bytes is not a whole number of ${recordBytes}-byte records`,
    )
  }
  const images: LabeledImage[] = []
  for (let offset = 0; offset < raw.length; offset += recordBytes) {
    images.push(decodeCifarRecord(raw.subarray(offset, offset + recordBytes), labelBytes))
  }
  return images
}
