export {
  DEFAULT_STEP_US,
  StreamFormatError,
  decodeEvents,
  decodeMetadata,
} from "./format.js";
export type { DecodedEvents, DecodedMetadata, EventColumns } from "./format.js";
export { Dataset, openDataset } from "./dataset.js";
export type { BoundBatch } from "./dataset.js";
export { EVRW_HEADER_SIZE, EVRW_MAGIC, buildLnes, decodeWindowImage } from "./lnes.js";
export type { SensorGeometry, WindowImageFile } from "./lnes.js";
