"""Bit-exact encoder/decoder and loader for the event and metadata stream files.

Event stream file: a flat sequence of 4-byte blocks, two bytes little-endian
x, one byte y, one byte polarity. The polarity byte is 1 for positive and 0
for negative events; the value 255 marks a frame tick that advances the
stream clock by one time step (1 ms by default), with the x and y bytes of
tick blocks ignored. Each step's events precede its tick, so a file holding
S steps carries exactly S tick blocks and timestamps decode as
step_index * step_us.

Metadata stream file: a 4-byte little-endian integer N (fields per frame)
followed by records of N little-endian IEEE-754 doubles plus a 2-byte magic,
8N+2 bytes per record. The encoder writes magic 0x4D45; the decoder accepts
any value but requires it to be constant across the file.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .events import EVENT_DTYPE, US_PER_MS, as_event_array, events_from_columns

#: Default stream clock: one tick per millisecond.
DEFAULT_STEP_US = US_PER_MS

TICK_BYTE = 255
POSITIVE_BYTE = 1
NEGATIVE_BYTE = 0
DEFAULT_MAGIC = 0x4D45
POSE_FIELD_COUNT = 12

_BLOCK_DTYPE = np.dtype([("x", "<u2"), ("y", "u1"), ("p", "u1")])

try:
    from numba import njit as _njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _HAVE_NUMBA = False


class StreamFormatError(ValueError):
    """Malformed event or metadata stream bytes."""


if _HAVE_NUMBA:

    @_njit(cache=True)
    def _fill_events_jit(u8, out_t, out_x, out_y, out_p, bounds, step_us):  # pragma: no cover
        """Single-pass block walk; returns the first invalid block index or -1.

        Compiled path: one read of the raw blocks and one interleaved write of
        the output records, which is what keeps the loader at memory speed.
        """
        n_blocks = u8.shape[0] // 4
        ei = 0
        step = 0
        for i in range(n_blocks):
            pb = u8[4 * i + 3]
            if pb == TICK_BYTE:
                step += 1
                bounds[step] = ei
            elif pb <= 1:
                out_t[ei] = step * step_us
                out_x[ei] = np.uint16(u8[4 * i]) | (np.uint16(u8[4 * i + 1]) << 8)
                out_y[ei] = u8[4 * i + 2]
                out_p[ei] = POSITIVE_BYTE - pb
                ei += 1
            else:
                return i
        bounds[step + 1 :] = ei
        return -1


@dataclass(frozen=True)
class PoseVector:
    """12-D hand state: 6 articulation coefficients, translation (m), rotation (axis-angle rad).

    The component order matches the metadata file layout: articulation first,
    then translation, then rotation.
    """

    articulation: np.ndarray
    translation: np.ndarray
    rotation: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "articulation", np.asarray(self.articulation, dtype=np.float64))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64))
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64))
        if self.articulation.shape != (6,):
            raise ValueError(f"articulation must have 6 components, got {self.articulation.shape}")
        if self.translation.shape != (3,):
            raise ValueError(f"translation must have 3 components, got {self.translation.shape}")
        if self.rotation.shape != (3,):
            raise ValueError(f"rotation must have 3 components, got {self.rotation.shape}")
        vec = self.as_array()
        if not np.all(np.isfinite(vec)):
            raise ValueError("pose components must all be finite")

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.articulation, self.translation, self.rotation])

    @classmethod
    def from_array(cls, values: np.ndarray) -> "PoseVector":
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (POSE_FIELD_COUNT,):
            raise ValueError(f"pose vector must have {POSE_FIELD_COUNT} components, got {values.shape}")
        return cls(values[:6], values[6:9], values[9:12])


class EncodedEvents(NamedTuple):
    """encode_events() result: file bytes plus the off-grid timestamp count."""

    data: bytes
    quantized_count: int


def encode_events(
    stream: np.ndarray,
    step_count: int | None = None,
    step_us: int = DEFAULT_STEP_US,
) -> EncodedEvents:
    """Encode a sorted stream into event-file bytes.

    Timestamps are quantized down to the step grid; ``quantized_count``
    reports how many events were off-grid (the format cannot represent
    sub-step times). ``step_count`` defaults to the smallest count covering
    the last event.
    """
    ev = as_event_array(stream)
    t = ev["t"].astype(np.int64, copy=False)
    if len(t) and int(t[0]) < 0:
        raise StreamFormatError(f"timestamps must be non-negative, got {int(t[0])}")
    if len(t) > 1 and np.any(np.diff(t) < 0):
        i = int(np.flatnonzero(np.diff(t) < 0)[0]) + 1
        raise StreamFormatError(f"timestamps must be non-decreasing; event {i} regresses")
    # x > 65535 is unrepresentable in EVENT_DTYPE itself; only y needs a check here
    if len(ev) and int(ev["y"].max()) > 0xFF:
        raise StreamFormatError("y coordinate exceeds 255; not representable in this format")
    if np.any(ev["p"] > 1):
        raise StreamFormatError("polarity channel must be 0 or 1")

    steps = t // step_us
    quantized = int(np.count_nonzero(t % step_us))
    needed = int(steps[-1]) + 1 if len(steps) else 0
    if step_count is None:
        step_count = needed
    elif step_count < needed:
        raise StreamFormatError(
            f"step_count {step_count} cannot hold events reaching step {needed - 1}"
        )

    n = len(ev)
    blocks = np.zeros(n + step_count, dtype=_BLOCK_DTYPE)
    # tick k sits after all events of steps <= k
    tick_pos = np.searchsorted(steps, np.arange(1, step_count + 1), side="left") + np.arange(
        step_count
    )
    mask = np.ones(n + step_count, dtype=bool)
    mask[tick_pos] = False
    blocks["x"][mask] = ev["x"]
    blocks["y"][mask] = ev["y"]
    blocks["p"][mask] = POSITIVE_BYTE - ev["p"]  # channel 0 (positive) -> byte 1
    blocks["p"][tick_pos] = TICK_BYTE
    return EncodedEvents(blocks.tobytes(), quantized)


class DecodedEvents(NamedTuple):
    events: np.ndarray
    step_count: int


def _decode_blocks_numpy(data: bytes, step_us: int) -> tuple[np.ndarray, int, np.ndarray]:
    """Vectorized fallback decoder; bit-identical to the compiled path."""
    blocks = np.frombuffer(data, dtype=_BLOCK_DTYPE)
    p = blocks["p"]
    tick_idx = np.flatnonzero(p == TICK_BYTE)
    step_count = int(len(tick_idx))

    ev_mask = np.ones(len(blocks), dtype=bool)
    ev_mask[tick_idx] = False
    p_ev = p[ev_mask]
    if p_ev.size and int(p_ev.max()) > 1:
        ev_idx = np.flatnonzero(ev_mask)
        bad = int(ev_idx[np.flatnonzero(p_ev > 1)[0]])
        raise StreamFormatError(
            f"invalid polarity byte {int(p[bad])} at offset {4 * bad + 3}"
        )

    # events preceding tick k: tick_idx[k] - k; differences give per-step counts,
    # with any events after the final tick assigned to step step_count.
    n_events = len(blocks) - step_count
    bounds = np.concatenate([[0], tick_idx - np.arange(step_count), [n_events]])
    counts = np.diff(bounds)
    t = np.repeat(np.arange(len(counts), dtype=np.int64) * step_us, counts)
    events = events_from_columns(
        t, blocks["x"][ev_mask], blocks["y"][ev_mask].astype(np.uint16), POSITIVE_BYTE - p_ev
    )
    return events, step_count, bounds


def _decode_blocks(data: bytes, step_us: int) -> tuple[np.ndarray, int, np.ndarray]:
    """Shared decoder core: (events, step count, per-step slice bounds)."""
    if len(data) % 4:
        raise StreamFormatError(
            f"truncated file: {len(data)} bytes is not a multiple of 4 "
            f"(partial block at offset {4 * (len(data) // 4)})"
        )
    if not _HAVE_NUMBA:
        return _decode_blocks_numpy(data, step_us)
    u8 = np.frombuffer(data, dtype=np.uint8)
    step_count = int(np.count_nonzero(u8[3::4] == TICK_BYTE))
    n_events = len(u8) // 4 - step_count
    events = np.empty(n_events, dtype=EVENT_DTYPE)
    bounds = np.empty(step_count + 2, dtype=np.int64)
    bounds[0] = 0
    bad = _fill_events_jit(
        u8, events["t"], events["x"], events["y"], events["p"], bounds, step_us
    )
    if bad >= 0:
        raise StreamFormatError(
            f"invalid polarity byte {int(u8[4 * bad + 3])} at offset {4 * bad + 3}"
        )
    return events, step_count, bounds


def decode_events(data: bytes, step_us: int = DEFAULT_STEP_US) -> DecodedEvents:
    """Decode event-file bytes; inverse of :func:`encode_events`.

    Raises StreamFormatError with the offending byte offset for truncated
    input or an invalid polarity byte. Never raises anything else, for any
    input bytes.
    """
    events, step_count, _ = _decode_blocks(data, step_us)
    return DecodedEvents(events, step_count)


def encode_metadata(poses: np.ndarray, magic: int = DEFAULT_MAGIC) -> bytes:
    """Encode an (S, N) float64 pose array into metadata-file bytes."""
    poses = np.asarray(poses, dtype=np.float64)
    if poses.ndim != 2 or poses.shape[1] < 1:
        raise StreamFormatError(f"poses must be a (frames, fields) array, got shape {poses.shape}")
    if not 0 <= magic <= 0xFFFF:
        raise StreamFormatError(f"magic must fit in two bytes, got {magic}")
    s, n = poses.shape
    record = np.dtype([("pose", "<f8", (n,)), ("magic", "<u2")])
    out = np.empty(s, dtype=record)
    out["pose"] = poses
    out["magic"] = magic
    return np.array(n, dtype="<u4").tobytes() + out.tobytes()


class DecodedMetadata(NamedTuple):
    poses: np.ndarray
    magic: int


def decode_metadata(data: bytes) -> DecodedMetadata:
    """Decode metadata-file bytes into an (S, N) float64 array (bit-preserving)."""
    if len(data) < 4:
        raise StreamFormatError(f"metadata file too short for header: {len(data)} bytes")
    n = int(np.frombuffer(data[:4], dtype="<u4")[0])
    body = data[4:]
    if n < 1:
        if body:
            raise StreamFormatError(f"field count {n} with a non-empty body")
        return DecodedMetadata(np.empty((0, 0), dtype=np.float64), DEFAULT_MAGIC)
    record_size = 8 * n + 2
    if len(body) % record_size:
        raise StreamFormatError(
            f"trailing partial record: body of {len(body)} bytes is not a multiple "
            f"of the {record_size}-byte record (frame {len(body) // record_size})"
        )
    if not body:
        return DecodedMetadata(np.empty((0, n), dtype=np.float64), DEFAULT_MAGIC)
    record = np.dtype([("pose", "<f8", (n,)), ("magic", "<u2")])
    rec = np.frombuffer(body, dtype=record)
    magic = rec["magic"]
    mismatch = np.flatnonzero(magic != magic[0])
    if len(mismatch):
        raise StreamFormatError(
            f"magic mismatch at frame {int(mismatch[0])}: "
            f"0x{int(magic[mismatch[0]]):04X} != 0x{int(magic[0]):04X}"
        )
    return DecodedMetadata(rec["pose"].astype(np.float64, copy=True), int(magic[0]))


class PairedStep(NamedTuple):
    step: int
    events: np.ndarray
    pose: np.ndarray


def load_paired(
    event_path: str | os.PathLike,
    metadata_path: str | os.PathLike,
    step_us: int = DEFAULT_STEP_US,
) -> Iterator[PairedStep]:
    """Stream synchronized (step, events-of-step, pose) tuples from a file pair.

    The whole pair is decoded vectorized up front (this is the throughput
    path); iteration slices per-step views. Raises StreamFormatError when the
    two files disagree on the step count.
    """
    with open(event_path, "rb") as fh:
        events, step_count, bounds = _decode_blocks(fh.read(), step_us)
    with open(metadata_path, "rb") as fh:
        poses, _ = decode_metadata(fh.read())
    if len(poses) != step_count:
        raise StreamFormatError(
            f"metadata frame count and event step count differ: {len(poses)} ≠ {step_count}"
        )

    def steps() -> Iterator[PairedStep]:
        for k in range(step_count):
            yield PairedStep(k, events[bounds[k] : bounds[k + 1]], poses[k])

    return steps()


def write_events(path: str | os.PathLike, stream: np.ndarray, step_count: int | None = None,
                 step_us: int = DEFAULT_STEP_US) -> int:
    """Encode and write an event file; returns the quantized-timestamp count."""
    data, quantized = encode_events(stream, step_count=step_count, step_us=step_us)
    with open(path, "wb") as fh:
        fh.write(data)
    return quantized


def read_events(path: str | os.PathLike, step_us: int = DEFAULT_STEP_US) -> DecodedEvents:
    with open(path, "rb") as fh:
        return decode_events(fh.read(), step_us=step_us)


def write_metadata(path: str | os.PathLike, poses: np.ndarray, magic: int = DEFAULT_MAGIC) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_metadata(poses, magic=magic))


def read_metadata(path: str | os.PathLike) -> DecodedMetadata:
    with open(path, "rb") as fh:
        return decode_metadata(fh.read())
