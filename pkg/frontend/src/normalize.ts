/**
 * Per-dimension standardization of a feature matrix.  The downstream trainer
 * consumes frozen feature vectors as-is, so any input normalization has to
 * happen here in the extraction pipeline; the fitted statistics go into the
 * manifest so the same transform can be replayed on new data.
 */

export interface NormalizeStats {
  mean: number[]
  std: number[]
  epsilon: number
}

export function fitNormalizeStats(
  features: Float64Array,
  count: number,
  dim: number,
  epsilon = 1e-5,
): NormalizeStats {
  if (count < 2) {
    throw new Error(`need at least 2 rows to fit statistics, got ${count}`)
  }
  const mean = new Array<number>(dim).fill(0)
  const std = new Array<number>(dim).fill(0)
  for (let i = 0; i < count; i++) {
    for (let j = 0; j < dim; j++) {
      mean[j] += features[i * dim + j]
    }
  }
  for (let j = 0; j < dim; j++) {
    mean[j] /= count
  }
  for (let i = 0; i < count; i++) {
    for (let j = 0; j < dim; j++) {
      const d = features[i * dim + j] - mean[j]
      std[j] += d * d
    }
  }
  for (let j = 0; j < dim; j++) {
    // population variance, matching inference-time batch-norm conventions
    std[j] = Math.sqrt(std[j] / count + epsilon)
  }
  return { mean, std, epsilon }
}

export function applyNormalize(
  features: Float64Array,
  count: number,
  dim: number,
  stats: NormalizeStats,
): Float64Array {
  if (stats.mean.length !== dim || stats.std.length !== dim) {
    throw new Error(
      `statistics are for dim ${stats.mean.length}, features have dim ${dim}`,
    )
  }
  const out = new Float64Array(count * dim)
  for (let i = 0; i < count; i++) {
    for (let j = 0; j < dim; j++) {
      out[i * dim + j] = (features[i * dim + j] - stats.mean[j]) / stats.std[j]
    }
  }
  return out
}
