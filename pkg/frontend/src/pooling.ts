/**
 * Adaptive 1-D average pooling: maps a flattened feature vector of any length
 * L >= targetDim to exactly targetDim values.  Bin i averages input indices
 * [floor(i*L/D), ceil((i+1)*L/D)), so the bins tile the input with at most
 * one element of overlap and every output is an exact mean of a contiguous
 * slice.  L == D is the identity.
 */
export function adaptiveAvgPool(input: ArrayLike<number>, targetDim: number): Float64Array {
  const length = input.length
  if (targetDim < 1 || !Number.isInteger(targetDim)) {
    throw new Error(`targetDim must be a positive integer, got ${targetDim}`)
  }
  if (length < targetDim) {
    throw new Error(`cannot pool ${length} values up to ${targetDim}`)
  }
  const out = new Float64Array(targetDim)
  for (let i = 0; i < targetDim; i++) {
    const start = Math.floor((i * length) / targetDim)
    const end = Math.ceil(((i + 1) * length) / targetDim)
    let sum = 0
    for (let j = start; j < end; j++) {
      sum += input[j]
    }
    out[i] = sum / (end - start)
  }
  return out
}
