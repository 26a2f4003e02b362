"""Pixel-exact event-camera simulator over procedurally rendered scenes.

Emission model, per rendered log-brightness frame and per pixel: noise
events fire first (per-pixel per-step Bernoulli with probability
rate / (W * H * steps_per_second), sampled through an exactly equivalent
binomial count plus uniform pixel subset); then the brightness difference
delta = L(u) - M(u) against the memory frame M emits floor(delta / C)
positive events when delta >= C (or the mirrored negative case) and moves
M(u) by the emitted whole multiple of C. Noise events leave M untouched.

Within one frame the event order is deterministic: positive noise events in
row-major pixel order, then negative noise events, then brightness events in
row-major order with per-pixel multiplicity. All events of a frame carry the
frame timestamp.

Scenes are a shaded sphere or disk over a static background; the primitive's
center follows the translation components of a quadratic Bezier pose
trajectory and its checker texture spins with the rotation components, so
every pose component that the annotation stream carries also drives events.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .events import EVENT_DTYPE, US_PER_S, SensorGeometry, events_from_columns

try:
    from numba import njit as _njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _HAVE_NUMBA = False

#: Pinhole-ish projection constants: pixels per meter at the nominal depth.
FOCAL_PX = 240.0
NOMINAL_DEPTH_M = 1.0

#: Per-sequence threshold redraw distribution used by scene re-randomization.
THRESHOLD_MEAN = 0.5
THRESHOLD_STD = 0.02


@dataclass(frozen=True)
class CameraConfig:
    """Sensor geometry and emission parameters, defaulted to a DAVIS240C."""

    geometry: SensorGeometry = SensorGeometry()
    threshold: float = 0.5
    noise_rate_positive: float = 2500.0
    noise_rate_negative: float = 100.0
    epsilon: float = 1.0
    steps_per_second: int = 1000

    def __post_init__(self) -> None:
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")
        if self.noise_rate_positive < 0 or self.noise_rate_negative < 0:
            raise ValueError("noise rates must be non-negative")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.steps_per_second < 1:
            raise ValueError("steps_per_second must be at least 1")

    def noise_probability(self, rate: float) -> float:
        p = rate / (self.geometry.pixel_count * self.steps_per_second)
        if p > 1.0:
            raise ValueError(f"noise rate {rate} exceeds one event per pixel per step")
        return p


@dataclass(frozen=True, eq=False)
class LogBrightnessFrame:
    """A (height, width) log-brightness image at one timestamp (us)."""

    values: np.ndarray
    timestamp: int = 0

    def __post_init__(self) -> None:
        if self.values.ndim != 2:
            raise ValueError(f"expected a 2-D array, got shape {self.values.shape}")
        if not np.isfinite(self.values).all():
            raise ValueError("log-brightness values must all be finite")


@dataclass(frozen=True, eq=False)
class MemoryFrame:
    """Per-pixel log-brightness at the last emitted event."""

    values: np.ndarray


@dataclass(frozen=True)
class LightingConfig:
    """Two directional lights plus an ambient term."""

    l1: np.ndarray
    l2: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    c_ambient: np.ndarray

    def __post_init__(self) -> None:
        for name in ("l1", "l2", "c1", "c2", "c_ambient"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        for name in ("l1", "l2"):
            norm = float(np.linalg.norm(getattr(self, name)))
            if abs(norm - 1.0) > 1e-6:
                raise ValueError(f"{name} must be a unit vector, |{name}| = {norm}")


@dataclass(frozen=True)
class Primitive:
    """Procedural shape: a shaded sphere or a flat disk with a checker texture."""

    kind: str = "sphere"
    radius_m: float = 0.12
    albedo_a: tuple = (0.9, 0.7, 0.5)
    albedo_b: tuple = (0.3, 0.4, 0.8)
    checker_divisions: int = 6

    def __post_init__(self) -> None:
        if self.kind not in ("sphere", "disk"):
            raise ValueError(f"primitive kind must be 'sphere' or 'disk', got {self.kind!r}")
        if self.radius_m <= 0:
            raise ValueError("radius must be positive")
        if self.checker_divisions < 1:
            raise ValueError("checker_divisions must be at least 1")


@dataclass(frozen=True, eq=False)
class BezierTrajectory:
    """Quadratic Bezier pose path: one segment per simulated second.

    ``keyposes`` has one more row than ``midpoints``; segment k interpolates
    keypose k to keypose k+1 through midpoint k over exactly one second.
    """

    keyposes: np.ndarray
    midpoints: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "keyposes", np.asarray(self.keyposes, dtype=np.float64))
        object.__setattr__(self, "midpoints", np.asarray(self.midpoints, dtype=np.float64))
        if self.keyposes.ndim != 2 or self.keyposes.shape[1] != 12:
            raise ValueError(f"keyposes must be (n+1, 12), got {self.keyposes.shape}")
        if self.midpoints.shape != (self.keyposes.shape[0] - 1, 12):
            raise ValueError(
                f"midpoints must be ({self.keyposes.shape[0] - 1}, 12), got {self.midpoints.shape}"
            )
        if self.segment_count < 1:
            raise ValueError("trajectory needs at least one segment")

    @property
    def segment_count(self) -> int:
        return self.keyposes.shape[0] - 1


@dataclass(frozen=True, eq=False)
class SceneConfig:
    """One concrete scene: primitive, background, pose path, lights.

    ``background`` is an RGB image at least as large as the sensor;
    ``crop_offset`` (x, y) selects the visible region, which re-randomization
    moves around. ``rerandomize_period`` (simulated seconds) redraws the
    whole scene and the camera threshold; None disables redraws.
    """

    primitive: Primitive
    background: np.ndarray
    trajectory: BezierTrajectory
    lighting: LightingConfig
    crop_offset: tuple = (0, 0)
    rerandomize_period: float | None = 50.0

    def cropped_background(self, geometry: SensorGeometry) -> np.ndarray:
        bh, bw = self.background.shape[:2]
        ox, oy = self.crop_offset
        if oy + geometry.height > bh or ox + geometry.width > bw or ox < 0 or oy < 0:
            raise ValueError(
                f"background {bw}x{bh} with crop offset {self.crop_offset} cannot cover "
                f"a {geometry.width}x{geometry.height} sensor"
            )
        return self.background[oy : oy + geometry.height, ox : ox + geometry.width]


def shade(normal: np.ndarray, albedo: np.ndarray, lighting: LightingConfig) -> np.ndarray:
    """Two-light Lambertian shading: clamped dot products, ambient term, albedo product.

    ``normal`` and ``albedo`` broadcast over leading axes with a trailing
    axis of 3. Returns linear RGB clamped to [0, 1].
    """
    normal = np.asarray(normal, dtype=np.float64)
    albedo = np.asarray(albedo, dtype=np.float64)
    norms = np.linalg.norm(normal, axis=-1)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        raise ValueError("surface normals must be unit vectors")
    d1 = np.maximum(normal @ lighting.l1, 0.0)
    d2 = np.maximum(normal @ lighting.l2, 0.0)
    light = d1[..., None] * lighting.c1 + d2[..., None] * lighting.c2 + lighting.c_ambient
    return np.clip(light * albedo, 0.0, 1.0)


def to_log_brightness(
    frame: np.ndarray, timestamp: int = 0, epsilon: float = 1.0
) -> LogBrightnessFrame:
    """Convert an RGB frame with channels in [0, 255] to log brightness.

    Natural log of the luma-weighted channel sum 0.2 R + 0.7 G + 0.1 B plus
    the stability constant.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) RGB frame, got shape {frame.shape}")
    if frame.min() < 0.0 or frame.max() > 255.0:
        raise ValueError("channel values must lie in [0, 255]")
    return LogBrightnessFrame(_log_luma(frame, epsilon), timestamp)


def _log_luma(rgb: np.ndarray, epsilon: float) -> np.ndarray:
    luma = 0.2 * rgb[..., 0] + 0.7 * rgb[..., 1] + 0.1 * rgb[..., 2]
    return np.log(luma + epsilon)


def sample_noise_pixels(rng: np.random.Generator, n_pixels: int, probability: float) -> np.ndarray:
    """Sorted linear pixel indices hit by noise this step.

    Exactly equivalent to an independent Bernoulli(probability) draw per
    pixel: the hit count is binomial and the hit set a uniform subset
    (Floyd's sampling).
    """
    if probability <= 0.0:
        return np.empty(0, dtype=np.int64)
    if probability > 1.0:
        raise ValueError(f"probability {probability} exceeds 1")
    count = int(rng.binomial(n_pixels, probability))
    if count == 0:
        return np.empty(0, dtype=np.int64)
    chosen: set[int] = set()
    for j in range(n_pixels - count, n_pixels):
        t = int(rng.integers(0, j + 1))
        chosen.add(j if t in chosen else t)
    return np.sort(np.fromiter(chosen, dtype=np.int64, count=count))


def _emit_brightness_events(
    log_values: np.ndarray,
    memory: np.ndarray,
    threshold: float,
    rows: slice,
    cols: slice,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Threshold crossings within a rectangular region, row-major order.

    Mutates ``memory`` in place by the emitted whole multiples of the
    threshold. Returns (x, y, polarity-channel) columns with per-pixel
    multiplicity already expanded.
    """
    region_l = log_values[rows, cols]
    region_m = memory[rows, cols]
    delta = region_l - region_m
    width = delta.shape[1]
    flat = delta.ravel()

    fired = np.flatnonzero(np.abs(flat) >= threshold)
    if not len(fired):
        return (np.empty(0, np.uint16), np.empty(0, np.uint16), np.empty(0, np.uint8))
    values = flat[fired]
    counts = np.floor(np.abs(values) / threshold).astype(np.int64)
    signs = values < 0  # polarity channel: 0 positive, 1 negative
    step_sign = np.where(signs, -1.0, 1.0)
    rel_y = fired // width
    rel_x = fired % width
    # indexed assignment writes through the (possibly strided) view of memory
    region_m[rel_y, rel_x] += step_sign * counts * threshold

    x = (rel_x + cols.start).astype(np.uint16)
    y = (rel_y + rows.start).astype(np.uint16)
    return (
        np.repeat(x, counts),
        np.repeat(y, counts),
        np.repeat(signs.astype(np.uint8), counts),
    )


def _noise_columns(
    idx: np.ndarray, width: int, channel: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x = (idx % width).astype(np.uint16)
    y = (idx // width).astype(np.uint16)
    p = np.full(len(idx), channel, dtype=np.uint8)
    return x, y, p


def step(
    memory: MemoryFrame,
    frame: LogBrightnessFrame,
    config: CameraConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, MemoryFrame]:
    """Advance the camera by one frame; returns (events, updated memory).

    Events are an EVENT_DTYPE array, all stamped with ``frame.timestamp``,
    ordered as documented in the module docstring. The returned memory is a
    new object; the input is left untouched.
    """
    geom = config.geometry
    if frame.values.shape != (geom.height, geom.width):
        raise ValueError(
            f"frame shape {frame.values.shape} does not match sensor "
            f"{geom.height}x{geom.width}"
        )
    if memory.values.shape != frame.values.shape:
        raise ValueError(
            f"memory shape {memory.values.shape} does not match frame {frame.values.shape}"
        )
    m = memory.values.copy()
    pos_idx = sample_noise_pixels(
        rng, geom.pixel_count, config.noise_probability(config.noise_rate_positive)
    )
    neg_idx = sample_noise_pixels(
        rng, geom.pixel_count, config.noise_probability(config.noise_rate_negative)
    )
    cols = [
        _noise_columns(pos_idx, geom.width, 0),
        _noise_columns(neg_idx, geom.width, 1),
        _emit_brightness_events(
            frame.values, m, config.threshold, slice(0, geom.height), slice(0, geom.width)
        ),
    ]
    x = np.concatenate([c[0] for c in cols])
    y = np.concatenate([c[1] for c in cols])
    p = np.concatenate([c[2] for c in cols])
    t = np.full(len(x), frame.timestamp, dtype=np.int64)
    return events_from_columns(t, x, y, p), MemoryFrame(m)


def bezier_pose(trajectory: BezierTrajectory, time: float) -> np.ndarray:
    """Evaluate the trajectory at ``time`` simulated seconds from its start."""
    span = trajectory.segment_count
    if time < 0.0 or time > span:
        raise ValueError(f"time {time} outside the trajectory span [0, {span}]")
    segment = min(int(math.floor(time)), span - 1)
    s = time - segment
    p0 = trajectory.keyposes[segment]
    p1 = trajectory.keyposes[segment + 1]
    pm = trajectory.midpoints[segment]
    return (1.0 - s) ** 2 * p0 + 2.0 * (1.0 - s) * s * pm + s**2 * p1


# ---------------------------------------------------------------------------
# Procedural rendering


class _Patch(NamedTuple):
    rows: slice
    cols: slice
    mask: np.ndarray
    rgb: np.ndarray


_EMPTY_PATCH = _Patch(slice(0, 0), slice(0, 0), np.zeros((0, 0), bool), np.zeros((0, 0, 3)))


def _project(pose: np.ndarray) -> tuple[float, float, float]:
    tx, ty, tz = pose[6], pose[7], pose[8]
    depth = max(NOMINAL_DEPTH_M + tz, 0.05)
    return tx * FOCAL_PX / depth, ty * FOCAL_PX / depth, 1.0 / depth


def _rotation_matrix(rotvec: np.ndarray) -> np.ndarray:
    angle = float(np.linalg.norm(rotvec))
    if angle < 1e-12:
        return np.eye(3)
    axis = rotvec / angle
    k = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


if _HAVE_NUMBA:

    @_njit(cache=True)
    def _patch_kernel(  # pragma: no cover - exercised through render_primitive_patch
        is_sphere, x0, x1, y0, y1, cx, cy, radius, rot, spin, k,
        albedo_a, albedo_b, l1, l2, c1, c2, c_ambient, mask, rgb,
    ):
        """Fused rasterize + texture + shade loop over the bounding box."""
        half_k = 0.5 * k
        cos_s = math.cos(spin)
        sin_s = math.sin(spin)
        for iy in range(y1 - y0):
            v = (y0 + iy - cy) / radius
            for ix in range(x1 - x0):
                u = (x0 + ix - cx) / radius
                rr = u * u + v * v
                if rr > 1.0:
                    continue
                mask[iy, ix] = True
                if is_sphere:
                    nx = u
                    ny = v
                    nz = math.sqrt(max(1.0 - rr, 0.0))
                    sx = nx * rot[0, 0] + ny * rot[1, 0] + nz * rot[2, 0]
                    sy = nx * rot[0, 1] + ny * rot[1, 1] + nz * rot[2, 1]
                    sz = nx * rot[0, 2] + ny * rot[1, 2] + nz * rot[2, 2]
                    cell = (
                        math.floor((sx + 1.0) * half_k)
                        + math.floor((sy + 1.0) * half_k)
                        + math.floor((sz + 1.0) * half_k)
                    ) % 2
                else:
                    nx = 0.0
                    ny = 0.0
                    nz = 1.0
                    ru = cos_s * u + sin_s * v
                    rv = -sin_s * u + cos_s * v
                    fu = min(max((ru + 1.0) / 2.0, 0.0), 1.0)
                    fv = min(max((rv + 1.0) / 2.0, 0.0), 1.0)
                    cell = (math.floor(fu * k) + math.floor(fv * k)) % 2
                albedo = albedo_a if cell == 0 else albedo_b
                d1 = max(nx * l1[0] + ny * l1[1] + nz * l1[2], 0.0)
                d2 = max(nx * l2[0] + ny * l2[1] + nz * l2[2], 0.0)
                for c in range(3):
                    value = (d1 * c1[c] + d2 * c2[c] + c_ambient[c]) * albedo[c]
                    rgb[iy, ix, c] = min(max(value, 0.0), 1.0) * 255.0


def _patch_numpy(is_sphere, x0, x1, y0, y1, cx, cy, radius, rot, spin, k,
                 albedo_a, albedo_b, l1, l2, c1, c2, c_ambient, mask, rgb):
    """Broadcast fallback with the same contract as the compiled kernel."""
    u = ((np.arange(x0, x1) - cx) / radius)[None, :]
    v = ((np.arange(y0, y1) - cy) / radius)[:, None]
    rr = u * u + v * v
    np.less_equal(rr, 1.0, out=mask)
    if is_sphere:
        nx, ny = u, v
        nz = np.sqrt(np.maximum(1.0 - rr, 0.0))
        sx = nx * rot[0, 0] + ny * rot[1, 0] + nz * rot[2, 0]
        sy = nx * rot[0, 1] + ny * rot[1, 1] + nz * rot[2, 1]
        sz = nx * rot[0, 2] + ny * rot[1, 2] + nz * rot[2, 2]
        cell = (
            np.floor((sx + 1.0) * (0.5 * k))
            + np.floor((sy + 1.0) * (0.5 * k))
            + np.floor((sz + 1.0) * (0.5 * k))
        ) % 2
    else:
        nx, ny, nz = 0.0, 0.0, 1.0
        ru = math.cos(spin) * u + math.sin(spin) * v
        rv = -math.sin(spin) * u + math.cos(spin) * v
        fu = np.clip((ru + 1.0) / 2.0, 0.0, 1.0)
        fv = np.clip((rv + 1.0) / 2.0, 0.0, 1.0)
        cell = (np.floor(fu * k) + np.floor(fv * k)) % 2
    albedo = np.where((cell == 0)[..., None], albedo_a, albedo_b)
    d1 = np.maximum(nx * l1[0] + ny * l1[1] + nz * l1[2], 0.0)
    d2 = np.maximum(nx * l2[0] + ny * l2[1] + nz * l2[2], 0.0)
    light = np.multiply.outer(d1, c1) + np.multiply.outer(d2, c2) + c_ambient
    out = np.clip(light * albedo, 0.0, 1.0)
    out *= 255.0
    rgb[:] = out


def render_primitive_patch(
    scene: SceneConfig, pose: np.ndarray, geometry: SensorGeometry
) -> _Patch:
    """Rasterize and shade the primitive for one pose; background not included.

    Returns the covered bounding box (row and column slices), a coverage
    mask and the shaded RGB values in [0, 255] for that box. Shading follows
    the same two-light model as :func:`shade` (clamped dot products, ambient
    term, albedo product, clip to [0, 1]); rgb values outside the mask are
    meaningless.
    """
    prim = scene.primitive
    lighting = scene.lighting
    dx_px, dy_px, inv_depth = _project(pose)
    cx = geometry.width / 2.0 + dx_px
    cy = geometry.height / 2.0 + dy_px
    radius = prim.radius_m * FOCAL_PX * inv_depth

    x0 = max(int(math.ceil(cx - radius)), 0)
    x1 = min(int(math.floor(cx + radius)) + 1, geometry.width)
    y0 = max(int(math.ceil(cy - radius)), 0)
    y1 = min(int(math.floor(cy + radius)) + 1, geometry.height)
    if x0 >= x1 or y0 >= y1:
        return _EMPTY_PATCH

    mask = np.zeros((y1 - y0, x1 - x0), dtype=bool)
    rgb = np.zeros((y1 - y0, x1 - x0, 3))
    fill = _patch_kernel if _HAVE_NUMBA else _patch_numpy
    fill(
        prim.kind == "sphere", x0, x1, y0, y1, cx, cy, radius,
        _rotation_matrix(pose[9:12]), float(pose[11]), prim.checker_divisions,
        np.asarray(prim.albedo_a, dtype=np.float64),
        np.asarray(prim.albedo_b, dtype=np.float64),
        lighting.l1, lighting.l2, lighting.c1, lighting.c2, lighting.c_ambient,
        mask, rgb,
    )
    if not mask.any():
        return _EMPTY_PATCH
    return _Patch(slice(y0, y1), slice(x0, x1), mask, rgb)


def render_frame(scene: SceneConfig, pose: np.ndarray, geometry: SensorGeometry) -> np.ndarray:
    """Full RGB frame in [0, 255]: cropped background plus the shaded primitive."""
    frame = np.array(scene.cropped_background(geometry), dtype=np.float64, copy=True)
    patch = render_primitive_patch(scene, pose, geometry)
    if patch.mask.size:
        frame[patch.rows, patch.cols][patch.mask] = patch.rgb[patch.mask]
    return frame


# ---------------------------------------------------------------------------
# Scene sampling (re-randomization draws)


def _smooth_noise_image(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    """Low-frequency RGB field in [0, 255], bilinearly upsampled from a coarse grid."""
    gh, gw = max(height // 24, 2), max(width // 24, 2)
    coarse = rng.uniform(20.0, 235.0, size=(gh, gw, 3))
    ys = np.linspace(0, gh - 1, height)
    xs = np.linspace(0, gw - 1, width)
    y0 = np.clip(ys.astype(int), 0, gh - 2)
    x0 = np.clip(xs.astype(int), 0, gw - 2)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    c00 = coarse[y0][:, x0]
    c01 = coarse[y0][:, x0 + 1]
    c10 = coarse[y0 + 1][:, x0]
    c11 = coarse[y0 + 1][:, x0 + 1]
    return (1 - fy) * ((1 - fx) * c00 + fx * c01) + fy * ((1 - fx) * c10 + fx * c11)


def sample_pose(rng: np.random.Generator) -> np.ndarray:
    """One random 12-D pose: articulation U[-2,2], bounded translation, random rotation."""
    pose = np.empty(12)
    pose[:6] = rng.uniform(-2.0, 2.0, 6)
    pose[6] = rng.uniform(-0.3, 0.3)
    pose[7] = rng.uniform(-0.3, 0.3)
    pose[8] = rng.uniform(-0.09, 0.09)
    axis = rng.normal(size=3)
    axis /= max(np.linalg.norm(axis), 1e-12)
    pose[9:12] = axis * rng.uniform(0.0, math.pi)
    return pose


def sample_trajectory(rng: np.random.Generator, segments: int) -> BezierTrajectory:
    """Random keypose per second boundary plus a random midpoint per segment."""
    keyposes = np.stack([sample_pose(rng) for _ in range(segments + 1)])
    midpoints = np.stack([sample_pose(rng) for _ in range(segments)])
    return BezierTrajectory(keyposes, midpoints)


def sample_lighting(rng: np.random.Generator) -> LightingConfig:
    def direction() -> np.ndarray:
        v = rng.normal(size=3)
        return v / np.linalg.norm(v)

    i1, i2 = rng.uniform(0.9, 1.1, 2)
    return LightingConfig(
        l1=direction(),
        l2=direction(),
        c1=i1 * np.full(3, 0.45),
        c2=i2 * np.full(3, 0.25),
        c_ambient=np.full(3, rng.uniform(0.05, 0.15)),
    )


def sample_scene(
    rng: np.random.Generator,
    geometry: SensorGeometry,
    trajectory_seconds: int,
    rerandomize_period: float | None = 50.0,
) -> SceneConfig:
    """Draw a full random scene with a trajectory covering ``trajectory_seconds``."""
    margin = 16
    background = _smooth_noise_image(rng, geometry.height + margin, geometry.width + margin)
    crop = (int(rng.integers(0, margin + 1)), int(rng.integers(0, margin + 1)))
    primitive = Primitive(
        kind="sphere" if rng.random() < 0.5 else "disk",
        radius_m=float(rng.uniform(0.08, 0.16)),
        albedo_a=tuple(rng.uniform(0.2, 1.0, 3)),
        albedo_b=tuple(rng.uniform(0.2, 1.0, 3)),
        checker_divisions=int(rng.integers(3, 9)),
    )
    return SceneConfig(
        primitive=primitive,
        background=background,
        trajectory=sample_trajectory(rng, max(trajectory_seconds, 1)),
        lighting=sample_lighting(rng),
        crop_offset=crop,
        rerandomize_period=rerandomize_period,
    )


# ---------------------------------------------------------------------------
# Full simulation loop


class SimulationStep(NamedTuple):
    """Per-step view of the running simulation; arrays are reused between steps."""

    index: int
    timestamp: int
    pose: np.ndarray
    events: np.ndarray
    log_values: np.ndarray
    memory: np.ndarray
    threshold: float


class SimulationResult(NamedTuple):
    events: np.ndarray
    poses: np.ndarray


def run_simulation(
    scene: SceneConfig,
    config: CameraConfig,
    duration: float,
    rng: np.random.Generator,
) -> Iterator[SimulationStep]:
    """Step-by-step simulation generator; ``simulate`` collects it.

    Step 0 renders the first frame and initializes the memory from it without
    emitting. Scene re-randomization (including a fresh threshold from
    N(0.5, 0.02^2)) happens when the clock crosses multiples of the scene's
    period. Only regions whose brightness may have changed are scanned for
    crossings, which is exact because untouched pixels always satisfy
    |L - M| < C after the previous step.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    geom = config.geometry
    n_steps = int(round(duration * config.steps_per_second))
    p_pos = config.noise_probability(config.noise_rate_positive)
    p_neg = config.noise_probability(config.noise_rate_negative)

    threshold = config.threshold
    epoch = 0.0
    next_redraw = (
        scene.rerandomize_period if scene.rerandomize_period and scene.rerandomize_period > 0
        else math.inf
    )

    bg_log = _log_luma(scene.cropped_background(geom).astype(np.float64), config.epsilon)
    log_values = bg_log.copy()
    memory = np.empty_like(log_values)
    prev_patch: _Patch | None = None
    full_rows, full_cols = slice(0, geom.height), slice(0, geom.width)

    for i in range(n_steps):
        t_sec = i / config.steps_per_second
        timestamp = i * US_PER_S // config.steps_per_second
        scan_all = i == 0

        if t_sec >= next_redraw:
            remaining = int(math.ceil(duration - t_sec)) + 1
            scene = sample_scene(
                rng, geom, remaining, rerandomize_period=scene.rerandomize_period
            )
            threshold = max(rng.normal(THRESHOLD_MEAN, THRESHOLD_STD), 1e-3)
            epoch = t_sec
            next_redraw += scene.rerandomize_period
            bg_log = _log_luma(scene.cropped_background(geom).astype(np.float64), config.epsilon)
            log_values = bg_log.copy()
            prev_patch = None
            scan_all = True

        pose = bezier_pose(scene.trajectory, t_sec - epoch)
        if prev_patch is not None and prev_patch.mask.size:
            log_values[prev_patch.rows, prev_patch.cols] = bg_log[
                prev_patch.rows, prev_patch.cols
            ]
        patch = render_primitive_patch(scene, pose, geom)
        if patch.mask.size:
            patch_log = _log_luma(patch.rgb, config.epsilon)
            np.copyto(
                log_values[patch.rows, patch.cols],
                np.where(patch.mask, patch_log, bg_log[patch.rows, patch.cols]),
            )

        if i == 0:
            memory[:] = log_values
            events = np.empty(0, dtype=EVENT_DTYPE)
        else:
            if scan_all:
                rows, cols = full_rows, full_cols
            else:
                rows, cols = _union_box(prev_patch, patch, geom)
            pos_idx = sample_noise_pixels(rng, geom.pixel_count, p_pos)
            neg_idx = sample_noise_pixels(rng, geom.pixel_count, p_neg)
            x, y, p = _emit_brightness_events(log_values, memory, threshold, rows, cols)
            if len(pos_idx) or len(neg_idx):
                parts = [
                    _noise_columns(pos_idx, geom.width, 0),
                    _noise_columns(neg_idx, geom.width, 1),
                    (x, y, p),
                ]
                x = np.concatenate([c[0] for c in parts])
                y = np.concatenate([c[1] for c in parts])
                p = np.concatenate([c[2] for c in parts])
            t = np.full(len(x), timestamp, dtype=np.int64)
            events = events_from_columns(t, x, y, p)
        prev_patch = patch

        yield SimulationStep(i, timestamp, pose, events, log_values, memory, threshold)


def _union_box(
    a: _Patch | None, b: _Patch, geometry: SensorGeometry
) -> tuple[slice, slice]:
    boxes = [p for p in (a, b) if p is not None and p.mask.size]
    if not boxes:
        return slice(0, 0), slice(0, 0)
    r0 = min(p.rows.start for p in boxes)
    r1 = max(p.rows.stop for p in boxes)
    c0 = min(p.cols.start for p in boxes)
    c1 = max(p.cols.stop for p in boxes)
    return slice(r0, r1), slice(c0, c1)


def simulate(
    scene: SceneConfig,
    config: CameraConfig,
    duration: float,
    rng: np.random.Generator,
) -> SimulationResult:
    """Run the full loop; returns the event stream and one pose row per step."""
    chunks = []
    poses = []
    for s in run_simulation(scene, config, duration, rng):
        poses.append(s.pose)
        if len(s.events):
            chunks.append(s.events)
    events = np.concatenate(chunks) if chunks else np.empty(0, dtype=EVENT_DTYPE)
    return SimulationResult(events, np.stack(poses) if poses else np.empty((0, 12)))

