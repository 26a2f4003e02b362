/**
 * LNES window builder over decoded event columns.
 *
 * The image is (channels, height, width) row-major float32; each cell holds
 * the window-normalized timestamp (t - start) / length of the newest event
 * at that (pixel, polarity), replayed oldest to newest so later events
 * override earlier ones. The float32 rounding matches the primary
 * serializer, which computes in float64 and narrows once on write.
 */

import type { EventColumns } from "./format.js";

export interface SensorGeometry {
  width: number;
  height: number;
}

export function buildLnes(
  events: EventColumns,
  geometry: SensorGeometry,
  windowStart: number,
  windowLength: number,
): Float32Array {
  const { width, height } = geometry;
  const image = new Float32Array(2 * height * width);
  const end = windowStart + windowLength;
  const n = events.t.length;
  for (let i = 0; i < n; i++) {
    const t = events.t[i];
    if (t < windowStart || t >= end) continue;
    const x = events.x[i];
    const y = events.y[i];
    if (x >= width || y >= height) {
      throw new Error(`event ${i} at (${x}, ${y}) is outside the ${width}x${height} sensor`);
    }
    const value = (t - windowStart) / windowLength; // float64, narrowed on store
    image[(events.p[i] * height + y) * width + x] = Math.fround(value);
  }
  return image;
}

export const EVRW_MAGIC = "EVRW";
export const EVRW_HEADER_SIZE = 16;

export interface WindowImageFile {
  kindByte: number;
  channels: number;
  width: number;
  height: number;
  payload: Float32Array;
}

/** Parse the flat binary window-image format written by the primary CLI. */
export function decodeWindowImage(data: Uint8Array): WindowImageFile {
  if (data.byteLength < EVRW_HEADER_SIZE) throw new Error("truncated window image header");
  const magic = String.fromCharCode(data[0], data[1], data[2], data[3]);
  if (magic !== EVRW_MAGIC) throw new Error(`bad magic ${JSON.stringify(magic)}`);
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  const kindByte = data[4];
  const channels = view.getUint16(5, true);
  const width = view.getUint16(7, true);
  const height = view.getUint16(9, true);
  const expected = channels * width * height;
  const body = data.subarray(EVRW_HEADER_SIZE);
  if (body.byteLength !== 4 * expected) {
    throw new Error(`payload holds ${body.byteLength / 4} values, header promises ${expected}`);
  }
  const payload = new Float32Array(expected);
  const bodyView = new DataView(body.buffer, body.byteOffset, body.byteLength);
  for (let i = 0; i < expected; i++) {
    payload[i] = bodyView.getFloat32(4 * i, true);
  }
  return { kindByte, channels, width, height, payload };
}
