/**
 * Byte-level decoders for the two stream file formats.
 *
 * Event stream: 4-byte blocks (uint16 LE x, uint8 y, uint8 polarity byte);
 * polarity 1 = positive, 0 = negative, 255 = frame tick advancing the clock
 * by one step. Events precede their step's tick. In decoded form the
 * polarity column holds the channel index (0 positive, 1 negative), matching
 * the LNES channel layout.
 *
 * Metadata stream: uint32 LE field count N, then records of N float64 LE
 * values plus a uint16 LE magic (8N+2 bytes each); the magic must be
 * constant across the file.
 */

export const DEFAULT_STEP_US = 1000;
export const TICK_BYTE = 255;

export class StreamFormatError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "StreamFormatError";
  }
}

export interface EventColumns {
  /** microsecond timestamps (exact integers stored as doubles) */
  t: Float64Array;
  x: Uint16Array;
  y: Uint16Array;
  /** polarity channel: 0 positive, 1 negative */
  p: Uint8Array;
}

export interface DecodedEvents {
  events: EventColumns;
  stepCount: number;
  /** events whose step index is < k sit before offset boundaries[k] */
  boundaries: Int32Array;
}

export function decodeEvents(data: Uint8Array, stepUs: number = DEFAULT_STEP_US): DecodedEvents {
  if (data.byteLength % 4 !== 0) {
    const offset = 4 * Math.floor(data.byteLength / 4);
    throw new StreamFormatError(
      `truncated file: ${data.byteLength} bytes is not a multiple of 4 (partial block at offset ${offset})`,
    );
  }
  const nBlocks = data.byteLength / 4;
  let stepCount = 0;
  for (let i = 0; i < nBlocks; i++) {
    if (data[4 * i + 3] === TICK_BYTE) stepCount++;
  }
  const nEvents = nBlocks - stepCount;
  const t = new Float64Array(nEvents);
  const x = new Uint16Array(nEvents);
  const y = new Uint16Array(nEvents);
  const p = new Uint8Array(nEvents);
  const boundaries = new Int32Array(stepCount + 2);
  let ei = 0;
  let step = 0;
  for (let i = 0; i < nBlocks; i++) {
    const pb = data[4 * i + 3];
    if (pb === TICK_BYTE) {
      step++;
      boundaries[step] = ei;
    } else if (pb <= 1) {
      t[ei] = step * stepUs;
      x[ei] = data[4 * i] | (data[4 * i + 1] << 8);
      y[ei] = data[4 * i + 2];
      p[ei] = 1 - pb;
      ei++;
    } else {
      throw new StreamFormatError(`invalid polarity byte ${pb} at offset ${4 * i + 3}`);
    }
  }
  boundaries.fill(ei, step + 1);
  return { events: { t, x, y, p }, stepCount, boundaries };
}

export interface DecodedMetadata {
  /** row-major (frames x fields) float64 values, bit-preserved */
  poses: Float64Array;
  fieldCount: number;
  frameCount: number;
  magic: number;
}

export function decodeMetadata(data: Uint8Array): DecodedMetadata {
  if (data.byteLength < 4) {
    throw new StreamFormatError(`metadata file too short for header: ${data.byteLength} bytes`);
  }
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  const n = view.getUint32(0, true);
  const body = data.byteLength - 4;
  if (n < 1) {
    if (body > 0) throw new StreamFormatError(`field count ${n} with a non-empty body`);
    return { poses: new Float64Array(0), fieldCount: 0, frameCount: 0, magic: 0 };
  }
  const recordSize = 8 * n + 2;
  if (body % recordSize !== 0) {
    throw new StreamFormatError(
      `trailing partial record: body of ${body} bytes is not a multiple of the ` +
        `${recordSize}-byte record (frame ${Math.floor(body / recordSize)})`,
    );
  }
  const frames = body / recordSize;
  const poses = new Float64Array(frames * n);
  let magic = -1;
  for (let f = 0; f < frames; f++) {
    const base = 4 + f * recordSize;
    for (let c = 0; c < n; c++) {
      poses[f * n + c] = view.getFloat64(base + 8 * c, true);
    }
    const m = view.getUint16(base + 8 * n, true);
    if (magic < 0) magic = m;
    else if (m !== magic) {
      const hex = (v: number) => `0x${v.toString(16).toUpperCase().padStart(4, "0")}`;
      throw new StreamFormatError(`magic mismatch at frame ${f}: ${hex(m)} != ${hex(magic)}`);
    }
  }
  return { poses, fieldCount: n, frameCount: frames, magic: magic < 0 ? 0 : magic };
}
