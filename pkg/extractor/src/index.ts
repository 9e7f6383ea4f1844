export { encodeFten, readFten, writeFten } from './ften'
export { loadImage, RgbImage } from './image'
export {
  ConvLayer,
  DOWNSAMPLE,
  FEATURE_DEPTH,
  buildLayers,
  forward,
  initBackend,
  layerNames,
} from './model'
export { ExtractJob, ExtractResult, expandImages, extract } from './extract'
