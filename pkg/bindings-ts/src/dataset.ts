/**
 * Random-access dataset handle over one event-file / metadata-file pair.
 *
 * The pair is decoded up front (the files are memory-friendly: 4 bytes per
 * block, 98 bytes per pose frame) and step ranges are served as typed-array
 * views, so slicing copies nothing but the pose rows requested.
 */

import { readFileSync } from "node:fs";

import {
  DEFAULT_STEP_US,
  DecodedEvents,
  EventColumns,
  StreamFormatError,
  decodeEvents,
  decodeMetadata,
} from "./format.js";

export interface BoundBatch {
  /** first step of the slice (inclusive) */
  startStep: number;
  /** one past the last step of the slice */
  endStep: number;
  events: EventColumns;
  /** row-major (steps x 12) pose values for the sliced steps */
  poses: Float64Array;
  poseFieldCount: number;
}

export class Dataset {
  private readonly decoded: DecodedEvents;
  private readonly poses: Float64Array;
  readonly poseFieldCount: number;
  readonly stepUs: number;

  constructor(eventData: Uint8Array, metadataData: Uint8Array, stepUs: number = DEFAULT_STEP_US) {
    this.decoded = decodeEvents(eventData, stepUs);
    const metadata = decodeMetadata(metadataData);
    if (metadata.frameCount !== this.decoded.stepCount) {
      throw new StreamFormatError(
        `metadata frame count and event step count differ: ` +
          `${metadata.frameCount} ≠ ${this.decoded.stepCount}`,
      );
    }
    this.poses = metadata.poses;
    this.poseFieldCount = metadata.fieldCount;
    this.stepUs = stepUs;
  }

  /** number of steps (and pose frames) in the dataset */
  get length(): number {
    return this.decoded.stepCount;
  }

  get eventCount(): number {
    return this.decoded.events.t.length;
  }

  /** events and poses of the half-open step range [start, end) */
  slice(start: number, end: number): BoundBatch {
    if (start < 0 || end > this.length || start > end) {
      throw new RangeError(`step range [${start}, ${end}) outside dataset of ${this.length} steps`);
    }
    const lo = this.decoded.boundaries[start];
    const hi = this.decoded.boundaries[end];
    const ev = this.decoded.events;
    const n = this.poseFieldCount;
    return {
      startStep: start,
      endStep: end,
      events: {
        t: ev.t.subarray(lo, hi),
        x: ev.x.subarray(lo, hi),
        y: ev.y.subarray(lo, hi),
        p: ev.p.subarray(lo, hi),
      },
      poses: this.poses.slice(start * n, end * n),
      poseFieldCount: n,
    };
  }
}

export function openDataset(
  eventPath: string,
  metadataPath: string,
  stepUs: number = DEFAULT_STEP_US,
): Dataset {
  return new Dataset(readFileSync(eventPath), readFileSync(metadataPath), stepUs);
}
