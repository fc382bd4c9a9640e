export {
  FeatureDataset,
  PlmfDtype,
  PLMF_MAGIC,
  PLMF_VERSION,
  HEADER_BYTES,
  makeDataset,
  encodePlmf,
  decodePlmf,
  writePlmf,
  readPlmf,
} from './plmf'
export { adaptiveAvgPool } from './pooling'
export { NormalizeStats, fitNormalizeStats, applyNormalize } from './normalize'
export {
  LabeledImage,
  IMAGE_BYTES,
  IMAGE_SIZE,
  CHANNELS,
  decodeCifarRecord,
  readCifarBatch,
} from './cifar10'
export {
  Backbone,
  buildDemoBackbone,
  loadBackbone,
  penultimate,
  freeze,
  weightsSha256,
} from './backbone'
export {
  ExtractionJob,
  Manifest,
  POOLING_MODE,
  extractFeatures,
  runJob,
} from './extractor'
