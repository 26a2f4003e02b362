"""Core event types, stream validation and sliding-window iteration.

Event streams are stored as numpy structured arrays (``EVENT_DTYPE``) so the
rest of the toolkit can stay vectorized; the ``Event`` dataclass is the
scalar view of one record. Timestamps are integer microseconds from stream
start, and every duration in this API is an integer microsecond count so
window boundaries never drift.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Iterator, Sequence

import numpy as np

US_PER_MS = 1_000
US_PER_S = 1_000_000

#: One event record: timestamp (us), pixel column, pixel row, polarity channel.
EVENT_DTYPE = np.dtype([("t", "<i8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1")])


class Polarity(IntEnum):
    """Brightness-change direction; the integer value is the channel index.

    Positive events (brightness increase) map to channel 0, negative events
    to channel 1. The on-disk byte encoding is a separate convention owned by
    :mod:`eventforge.stream_format`.
    """

    POSITIVE = 0
    NEGATIVE = 1

    @property
    def channel(self) -> int:
        return int(self)

    @property
    def sign(self) -> int:
        """+1 for positive events, -1 for negative events."""
        return 1 - 2 * int(self)


@dataclass(frozen=True)
class Event:
    """A single sensor event at pixel (x, y), time ``t`` microseconds."""

    x: int
    y: int
    t: int
    polarity: Polarity

    def __post_init__(self) -> None:
        if self.x < 0 or self.y < 0:
            raise ValueError(f"pixel coordinates must be non-negative, got ({self.x}, {self.y})")
        if self.t < 0:
            raise ValueError(f"timestamp must be non-negative, got {self.t}")


@dataclass(frozen=True)
class SensorGeometry:
    """Sensor pixel grid; defaults to the 240x180 DAVIS240C resolution."""

    width: int = 240
    height: int = 180

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"sensor must be at least 1x1, got {self.width}x{self.height}")

    @property
    def pixel_count(self) -> int:
        return self.width * self.height


@dataclass(frozen=True, eq=False)
class EventWindow:
    """Events of one time window [start, start + length) in microseconds.

    ``events`` is an EVENT_DTYPE array ordered oldest to newest (input order
    breaks timestamp ties).
    """

    start: int
    length: int
    events: np.ndarray

    @property
    def end(self) -> int:
        return self.start + self.length


def as_event_array(stream: np.ndarray | Iterable[Event]) -> np.ndarray:
    """Normalize a stream to an EVENT_DTYPE array.

    Structured arrays pass through; ones with the same fields but different
    padding (e.g. produced by ``np.concatenate``) are repacked.
    """
    if isinstance(stream, np.ndarray):
        if stream.dtype == EVENT_DTYPE:
            return stream
        if stream.dtype.names == EVENT_DTYPE.names and all(
            stream.dtype.fields[n][0] == EVENT_DTYPE.fields[n][0] for n in EVENT_DTYPE.names
        ):
            return stream.astype(EVENT_DTYPE)
        raise TypeError(f"expected dtype {EVENT_DTYPE}, got {stream.dtype}")
    records = [(e.t, e.x, e.y, int(e.polarity)) for e in stream]
    return np.array(records, dtype=EVENT_DTYPE) if records else np.empty(0, dtype=EVENT_DTYPE)


def events_from_columns(
    t: np.ndarray, x: np.ndarray, y: np.ndarray, p: np.ndarray
) -> np.ndarray:
    """Pack equal-length column arrays into one EVENT_DTYPE array."""
    n = len(t)
    if not (len(x) == len(y) == len(p) == n):
        raise ValueError("column lengths differ")
    # the packed dtype has no padding, so assigning every field covers all bytes
    out = np.empty(n, dtype=EVENT_DTYPE)
    out["t"] = t
    out["x"] = x
    out["y"] = y
    out["p"] = p
    return out


@dataclass(frozen=True)
class StreamValidationReport:
    """Violation counts and first offending indices for one stream.

    The report is empty (``is_valid``) iff the stream lies within the sensor
    bounds and timestamps never regress.
    """

    event_count: int
    out_of_bounds_count: int = 0
    first_out_of_bounds_index: int | None = None
    regression_count: int = 0
    first_regression_index: int | None = None

    @property
    def is_valid(self) -> bool:
        return self.out_of_bounds_count == 0 and self.regression_count == 0

    def __str__(self) -> str:
        if self.is_valid:
            return f"valid stream of {self.event_count} events"
        parts = []
        if self.out_of_bounds_count:
            parts.append(
                f"{self.out_of_bounds_count} out-of-bounds events "
                f"(first at index {self.first_out_of_bounds_index})"
            )
        if self.regression_count:
            parts.append(
                f"{self.regression_count} timestamp regressions "
                f"(first at index {self.first_regression_index})"
            )
        return "; ".join(parts)


def validate_stream(
    stream: np.ndarray | Iterable[Event], geometry: SensorGeometry
) -> StreamValidationReport:
    """Report out-of-bounds pixels and timestamp regressions without raising."""
    ev = as_event_array(stream)
    oob = (ev["x"] >= geometry.width) | (ev["y"] >= geometry.height)
    oob_idx = np.flatnonzero(oob)
    t = ev["t"]
    reg_idx = np.flatnonzero(np.diff(t) < 0) + 1 if len(t) > 1 else np.empty(0, dtype=np.int64)
    return StreamValidationReport(
        event_count=len(ev),
        out_of_bounds_count=int(len(oob_idx)),
        first_out_of_bounds_index=int(oob_idx[0]) if len(oob_idx) else None,
        regression_count=int(len(reg_idx)),
        first_regression_index=int(reg_idx[0]) if len(reg_idx) else None,
    )


def _check_sorted(t: np.ndarray) -> None:
    if len(t) > 1:
        bad = np.flatnonzero(np.diff(t) < 0)
        if len(bad):
            i = int(bad[0]) + 1
            raise ValueError(
                f"stream is not sorted by timestamp: event {i} has t={int(t[i])} "
                f"after t={int(t[i - 1])}"
            )


def slide_windows(
    stream: np.ndarray | Sequence[Event],
    length: int,
    stride: int,
    end: int | None = None,
) -> Iterator[EventWindow]:
    """Yield half-open windows [k*stride, k*stride + length) over a sorted stream.

    Windows are generated lazily in a single pass (two monotone cursors).
    Empty windows are yielded, not skipped, so downstream per-window clocks
    stay regular. By default iteration stops with the last window that can
    still contain the final event; pass ``end`` (stream duration in us) to
    instead yield exactly the windows that fit entirely inside [0, end).

    Raises ValueError for an unsorted stream, naming the first out-of-order
    index, or for stride < 1 us or length < stride.
    """
    if stride < 1:
        raise ValueError(f"stride must be at least 1 us, got {stride}")
    if length < stride:
        raise ValueError(f"length ({length}) must be >= stride ({stride})")
    ev = as_event_array(stream)
    t = ev["t"]
    _check_sorted(t)

    n = len(ev)
    if end is not None:
        if end < length:
            return
        last_start = ((end - length) // stride) * stride
    elif n == 0:
        return
    else:
        last_start = (int(t[-1]) // stride) * stride

    lo = 0
    hi = 0
    for start in range(0, last_start + 1, stride):
        while lo < n and t[lo] < start:
            lo += 1
        if hi < lo:
            hi = lo
        stop = start + length
        while hi < n and t[hi] < stop:
            hi += 1
        yield EventWindow(start=start, length=length, events=ev[lo:hi])
