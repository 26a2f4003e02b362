"""Event-threshold and noise-rate estimation from paired recordings.

The threshold estimator divides the total absolute log-intensity change of
consecutive intensity frames (each clamped below at a stability constant
before the log) by the number of events recorded over the same span: if N
events fired, the scene must have moved the log brightness by about N * C.
The protocol assumes per-pixel monotone motion between frames; brightness
reversals below the threshold inflate the numerator without producing
events, so the caller controls the scene (documented, not checked).

Noise rates come from a static-scene recording: events of each polarity
divided by the duration.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .events import US_PER_S, as_event_array

DEFAULT_CLAMP = 10.0


@dataclass(frozen=True, eq=False)
class CalibrationInput:
    """Intensity frames with timestamps plus the events covering the same span.

    ``frames`` is (count, height, width); intensities may exceed 8-bit range
    (only positivity after clamping matters). ``epsilon`` is the lower clamp
    applied before the natural log.
    """

    frames: np.ndarray
    timestamps: np.ndarray
    events: np.ndarray
    epsilon: float = DEFAULT_CLAMP

    def __post_init__(self) -> None:
        frames = np.asarray(self.frames, dtype=np.float64)
        timestamps = np.asarray(self.timestamps, dtype=np.int64)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "timestamps", timestamps)
        object.__setattr__(self, "events", as_event_array(self.events))
        if frames.ndim != 3 or frames.shape[0] < 2:
            raise ValueError(f"need at least two (H, W) frames, got shape {frames.shape}")
        if timestamps.shape != (frames.shape[0],):
            raise ValueError("one timestamp per frame required")
        if np.any(np.diff(timestamps) < 0):
            raise ValueError("frame timestamps must be non-decreasing")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        t = self.events["t"]
        if len(t) > 1 and np.any(np.diff(t) < 0):
            raise ValueError("events must be sorted by timestamp")

    @property
    def duration_seconds(self) -> float:
        return float(self.timestamps[-1] - self.timestamps[0]) / US_PER_S


class ThresholdEstimate(NamedTuple):
    """Raw estimate, plus a noise-corrected one when rates were supplied."""

    value: float
    corrected: float | None
    total_log_change: float
    event_count: int


def estimate_threshold(
    data: CalibrationInput,
    noise_rates: tuple[float, float] | None = None,
) -> ThresholdEstimate:
    """Estimate the event threshold as total |log-intensity change| / event count.

    With ``noise_rates`` (positive, negative events/second) the expected
    noise event count over the recording is subtracted from the denominator
    for the ``corrected`` figure; the raw value stays the primary estimate.
    """
    n_events = len(data.events)
    if n_events == 0:
        raise ValueError("cannot estimate a threshold from zero events")
    logs = np.log(np.maximum(data.frames, data.epsilon))
    total = float(np.abs(np.diff(logs, axis=0)).sum())
    corrected = None
    if noise_rates is not None:
        expected_noise = (noise_rates[0] + noise_rates[1]) * data.duration_seconds
        signal = n_events - expected_noise
        if signal > 0:
            corrected = total / signal
    return ThresholdEstimate(total / n_events, corrected, total, n_events)


def estimate_noise_rates(events: np.ndarray, duration: float) -> tuple[float, float]:
    """(positive, negative) events per second over a static-scene recording."""
    if duration <= 0:
        raise ValueError("duration must be positive")
    ev = as_event_array(events)
    positive = int(np.count_nonzero(ev["p"] == 0))
    negative = len(ev) - positive
    return positive / duration, negative / duration
