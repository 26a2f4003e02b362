"""Window images for learning: LNES and the EOI / ECI / ECI-S baselines.

All builders are pure functions from an EventWindow to a WindowImage whose
``channels`` array is laid out (polarity channel, row, column), row-major.
LNES stores, per pixel and polarity, the window-normalized timestamp
(t - start) / length of the newest event there, replaying events oldest to
newest so later events override earlier ones. An event exactly at the window
start maps to 0 and is therefore indistinguishable from "no event"; that is
the normalization's own behavior and is kept as is.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .events import EventWindow, SensorGeometry

EVRW_MAGIC = b"EVRW"
EVRW_HEADER_SIZE = 16


class RepresentationKind(Enum):
    LNES = "lnes"
    EOI = "eoi"
    ECI = "eci"
    ECI_S = "eci-s"

    @property
    def channel_count(self) -> int:
        return 1 if self is RepresentationKind.ECI_S else 2


#: Byte values identifying each kind in the EVRW file header.
_KIND_BYTES = {
    RepresentationKind.LNES: 0,
    RepresentationKind.EOI: 1,
    RepresentationKind.ECI: 2,
    RepresentationKind.ECI_S: 3,
}
_BYTE_KINDS = {v: k for k, v in _KIND_BYTES.items()}


@dataclass(frozen=True, eq=False)
class WindowImage:
    """A (channels, height, width) float image built from one event window."""

    kind: RepresentationKind
    channels: np.ndarray
    window_start: int
    window_length: int

    @property
    def height(self) -> int:
        return self.channels.shape[1]

    @property
    def width(self) -> int:
        return self.channels.shape[2]


def _window_indices(window: EventWindow, geometry: SensorGeometry):
    ev = window.events
    x = ev["x"].astype(np.intp)
    y = ev["y"].astype(np.intp)
    oob = np.flatnonzero((x >= geometry.width) | (y >= geometry.height))
    if len(oob):
        i = int(oob[0])
        raise ValueError(
            f"event {i} at ({int(x[i])}, {int(y[i])}) is outside the "
            f"{geometry.width}x{geometry.height} sensor"
        )
    return ev, x, y


def build_lnes(window: EventWindow, geometry: SensorGeometry) -> WindowImage:
    """Two-channel image of window-normalized timestamps, newest event winning."""
    ev, x, y = _window_indices(window, geometry)
    img = np.zeros((2, geometry.height, geometry.width), dtype=np.float64)
    if len(ev):
        values = (ev["t"] - window.start) / window.length
        # flat last-write-wins scatter; events are already oldest -> newest
        lin = (ev["p"].astype(np.intp) * geometry.height + y) * geometry.width + x
        img.ravel()[lin] = values
    return WindowImage(RepresentationKind.LNES, img, window.start, window.length)


def build_eoi(window: EventWindow, geometry: SensorGeometry) -> WindowImage:
    """Two-channel binary occurrence flags per pixel and polarity."""
    ev, x, y = _window_indices(window, geometry)
    img = np.zeros((2, geometry.height, geometry.width), dtype=np.float64)
    img[ev["p"].astype(np.intp), y, x] = 1.0
    return WindowImage(RepresentationKind.EOI, img, window.start, window.length)


def build_eci(window: EventWindow, geometry: SensorGeometry) -> WindowImage:
    """Two-channel per-polarity event counts."""
    ev, x, y = _window_indices(window, geometry)
    lin = (ev["p"].astype(np.intp) * geometry.height + y) * geometry.width + x
    counts = np.bincount(lin, minlength=2 * geometry.pixel_count)
    img = counts.reshape(2, geometry.height, geometry.width).astype(np.float64)
    return WindowImage(RepresentationKind.ECI, img, window.start, window.length)


def build_eci_s(window: EventWindow, geometry: SensorGeometry) -> WindowImage:
    """Single-channel event counts, polarity-blind."""
    ev, x, y = _window_indices(window, geometry)
    lin = y * geometry.width + x
    counts = np.bincount(lin, minlength=geometry.pixel_count)
    img = counts.reshape(1, geometry.height, geometry.width).astype(np.float64)
    return WindowImage(RepresentationKind.ECI_S, img, window.start, window.length)


_BUILDERS = {
    RepresentationKind.LNES: build_lnes,
    RepresentationKind.EOI: build_eoi,
    RepresentationKind.ECI: build_eci,
    RepresentationKind.ECI_S: build_eci_s,
}


def build(kind: RepresentationKind, window: EventWindow, geometry: SensorGeometry) -> WindowImage:
    return _BUILDERS[kind](window, geometry)


def swap_polarity(image: WindowImage, mask: np.ndarray) -> WindowImage:
    """Exchange the two polarity channels at masked pixels (contrast augmentation)."""
    if image.channels.shape[0] != 2:
        raise ValueError(f"polarity swap needs a 2-channel image, got {image.channels.shape[0]}")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != image.channels.shape[1:]:
        raise ValueError(f"mask shape {mask.shape} does not match image {image.channels.shape[1:]}")
    out = image.channels.copy()
    out[0, mask], out[1, mask] = image.channels[1, mask], image.channels[0, mask]
    return WindowImage(image.kind, out, image.window_start, image.window_length)


def rescale_window_length(window: EventWindow, new_length: int) -> EventWindow:
    """Trailing sub-window of ``new_length`` us ending at the same time.

    Lets one stream serve several effective motion speeds without
    regenerating it.
    """
    if new_length < 1:
        raise ValueError(f"window length must be at least 1 us, got {new_length}")
    new_start = window.end - new_length
    ev = window.events
    keep = ev[ev["t"] >= new_start] if len(ev) else ev
    return EventWindow(start=new_start, length=new_length, events=keep)


def encode_window_image(image: WindowImage) -> bytes:
    """Serialize to the flat binary form: 16-byte header + little-endian float32 payload."""
    c, h, w = image.channels.shape
    if w > 0xFFFF or h > 0xFFFF or c > 0xFFFF:
        raise ValueError(f"dimensions {image.channels.shape} do not fit 16-bit header fields")
    header = (
        EVRW_MAGIC
        + bytes([_KIND_BYTES[image.kind]])
        + np.array([c, w, h], dtype="<u2").tobytes()
        + bytes(5)
    )
    return header + image.channels.astype("<f4").tobytes()


def decode_window_image(data: bytes, window_start: int = 0, window_length: int = 1) -> WindowImage:
    """Parse bytes produced by :func:`encode_window_image`."""
    if len(data) < EVRW_HEADER_SIZE or data[:4] != EVRW_MAGIC:
        raise ValueError("not a window image: bad magic or truncated header")
    kind = _BYTE_KINDS.get(data[4])
    if kind is None:
        raise ValueError(f"unknown representation kind byte {data[4]}")
    c, w, h = (int(v) for v in np.frombuffer(data[5:11], dtype="<u2"))
    payload = np.frombuffer(data[EVRW_HEADER_SIZE:], dtype="<f4")
    if payload.size != c * h * w:
        raise ValueError(f"payload holds {payload.size} values, header promises {c * h * w}")
    channels = payload.reshape(c, h, w).astype(np.float64)
    return WindowImage(kind, channels, window_start, window_length)


def window_image_to_png(image: WindowImage, path: str) -> None:
    """Write a PNG visualization: channel 0 to red, channel 1 to green.

    Count images are scaled by their max; LNES/EOI values are already in
    [0, 1]. ECI-S renders as grayscale.
    """
    from PIL import Image

    ch = image.channels
    peak = ch.max()
    scale = 1.0 if peak <= 1.0 else 1.0 / peak
    h, w = ch.shape[1:]
    rgb = np.zeros((h, w, 3), dtype=np.uint8)
    if ch.shape[0] == 1:
        gray = np.round(ch[0] * scale * 255.0).astype(np.uint8)
        rgb[:] = gray[..., None]
    else:
        rgb[..., 0] = np.round(ch[0] * scale * 255.0).astype(np.uint8)
        rgb[..., 1] = np.round(ch[1] * scale * 255.0).astype(np.uint8)
    Image.fromarray(rgb).save(path)
