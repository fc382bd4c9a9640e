/**
 * PLMF feature-file serialization.
 *
 * Layout (all little-endian):
 *   magic   "PLMF" (4 bytes)
 *   version u32 (currently 1)
 *   count   u64
 *   dim     u32
 *   dtype   u8 (0 = f32, 1 = f64)
 *   lwidth  u8 (bytes per label; 4 = signed 32-bit, the only width written)
 *   payload count x dim floats, row-major
 *   footer  count labels, signed 32-bit
 */

import { readFileSync, writeFileSync } from 'fs'

export const PLMF_MAGIC = 'PLMF'
export const PLMF_VERSION = 1
export const HEADER_BYTES = 22

export type PlmfDtype = 'f32' | 'f64'

export interface FeatureDataset {
  /** count x dim, row-major */
  features: Float64Array
  /** one class label per row */
  labels: Int32Array
  count: number
  dim: number
}

export function makeDataset(
  rows: ArrayLike<number>[],
  labels: ArrayLike<number> | number[],
  dim: number,
): FeatureDataset {
  const count = rows.length
  const features = new Float64Array(count * dim)
  for (let i = 0; i < count; i++) {
    const row = rows[i]
    if (row.length !== dim) {
      throw new Error(`row ${i} has ${row.length} values, expected ${dim}`)
    }
    features.set(row as Float64Array, i * dim)
  }
  if (labels.length !== count) {
    throw new Error(`${count} rows but ${labels.length} labels`)
  }
  return { features, labels: Int32Array.from(labels as number[]), count, dim }
}

export function encodePlmf(dataset: FeatureDataset, dtype: PlmfDtype = 'f64'): Buffer {
  const { features, labels, count, dim } = dataset
  const itemBytes = dtype === 'f64' ? 8 : 4
  const buffer = Buffer.alloc(HEADER_BYTES + count * dim * itemBytes + count * 4)
  buffer.write(PLMF_MAGIC, 0, 'ascii')
  buffer.writeUInt32LE(PLMF_VERSION, 4)
  buffer.writeBigUInt64LE(BigInt(count), 8)
  buffer.writeUInt32LE(dim, 16)
  buffer.writeUInt8(dtype === 'f64' ? 1 : 0, 20)
  buffer.writeUInt8(4, 21)
  let offset = HEADER_BYTES
  if (dtype === 'f64') {
    for (let i = 0; i < features.length; i++) {
      buffer.writeDoubleLE(features[i], offset)
      offset += 8
    }
  } else {
    for (let i = 0; i < features.length; i++) {
      buffer.writeFloatLE(Math.fround(features[i]), offset)
      offset += 4
    }
  }
  for (let i = 0; i < labels.length; i++) {
    buffer.writeInt32LE(labels[i], offset)
    offset += 4
  }
  return buffer
}

export function decodePlmf(buffer: Buffer): FeatureDataset {
  if (buffer.length < HEADER_BYTES) {
    throw new Error(`file shorter than the ${HEADER_BYTES}-byte header`)
  }
  if (buffer.toString('ascii', 0, 4) !== PLMF_MAGIC) {
    throw new Error(`bad magic ${JSON.stringify(buffer.toString('ascii', 0, 4))}`)
  }
  const version = buffer.readUInt32LE(4)
  if (version !== PLMF_VERSION) {
    throw new Error(`version ${version}, expected ${PLMF_VERSION}`)
  }
  const count = Number(buffer.readBigUInt64LE(8))
  const dim = buffer.readUInt32LE(16)
  const dtypeFlag = buffer.readUInt8(20)
  const lwidth = buffer.readUInt8(21)
  if ((dtypeFlag !== 0 && dtypeFlag !== 1) || lwidth !== 4) {
    throw new Error(`unknown dtype flag ${dtypeFlag} / label width ${lwidth}`)
  }
  const itemBytes = dtypeFlag === 1 ? 8 : 4
  const expected = HEADER_BYTES + count * dim * itemBytes + count * 4
  if (buffer.length !== expected) {
    throw new Error(`expected ${expected} bytes, got ${buffer.length}`)
  }
  const features = new Float64Array(count * dim)
  let offset = HEADER_BYTES
  for (let i = 0; i < features.length; i++) {
    features[i] =
      dtypeFlag === 1 ? buffer.readDoubleLE(offset) : buffer.readFloatLE(offset)
    offset += itemBytes
  }
  const labels = new Int32Array(count)
  for (let i = 0; i < count; i++) {
    labels[i] = buffer.readInt32LE(offset)
    offset += 4
  }
  return { features, labels, count, dim }
}

export function writePlmf(path: string, dataset: FeatureDataset, dtype: PlmfDtype = 'f64') {
  writeFileSync(path, encodePlmf(dataset, dtype))
}

export function readPlmf(path: string): FeatureDataset {
  return decodePlmf(readFileSync(path))
}
