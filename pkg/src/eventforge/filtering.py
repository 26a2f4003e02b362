"""Constant-velocity Kalman filtering of 12-D poses and the slow-motion scheduler.

The filter state interleaves position and velocity per pose component,
S = [p1, v1, ..., p12, v12], giving 24 dimensions. Process noise follows the
discrete white-noise covariance operator: sigma^2 times a block diagonal of
12 identical 2x2 blocks [[dt^4/4, dt^3/2], [dt^3/2, dt^2]]. Observations are
the 12 positions with isotropic noise v * I.

Two named operating points exist: slow (sigma^2 = 0.1, v = 5.0) and fast
(sigma^2 = 3.0, v = 1.0). The scheduler runs a probe filter on the slow
setting and flips the main filter to fast when the probe's innovation norm
reaches 0.7. It also paces the 1 kHz loop: windows with fewer than 10 fresh
events are deferred, and when the average information content of the last 16
window images drops below 300 the scene is treated as stationary and the
previous prediction is repeated.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .representations import RepresentationKind, WindowImage
from .stream_format import POSE_FIELD_COUNT

STATE_DIM = 2 * POSE_FIELD_COUNT

MIN_EVENTS_PER_WINDOW = 10
STATIONARY_INFORMATION_MEAN = 300.0
FAST_MODE_RESIDUAL = 0.7
INFORMATION_RING_SIZE = 16


@dataclass
class FilterSettings:
    """Process variance, observation noise and step size of one filter."""

    process_sigma2: float
    observation_noise: float
    dt: float = 1.0

    def __post_init__(self) -> None:
        if self.process_sigma2 < 0:
            raise ValueError("process_sigma2 must be non-negative")
        if self.observation_noise <= 0:
            raise ValueError("observation_noise must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")


class Mode(Enum):
    SLOW = "slow"
    FAST = "fast"


def settings_for_mode(mode: Mode, dt: float = 1.0) -> FilterSettings:
    if mode is Mode.SLOW:
        return FilterSettings(process_sigma2=0.1, observation_noise=5.0, dt=dt)
    return FilterSettings(process_sigma2=3.0, observation_noise=1.0, dt=dt)


def mode_for_residual(residual: float) -> Mode:
    """Pure threshold rule: innovation norm >= 0.7 selects the fast setting."""
    return Mode.FAST if residual >= FAST_MODE_RESIDUAL else Mode.SLOW


@dataclass(frozen=True, eq=False)
class KalmanState:
    """24-D state vector and its covariance."""

    state: np.ndarray
    covariance: np.ndarray

    def positions(self) -> np.ndarray:
        return self.state[0::2]

    def velocities(self) -> np.ndarray:
        return self.state[1::2]


def initial_state(observation: np.ndarray, prior_variance: float = 10.0) -> KalmanState:
    """Start at the first observation with zero velocity and a wide prior."""
    observation = np.asarray(observation, dtype=np.float64)
    x = np.zeros(STATE_DIM)
    x[0::2] = observation
    return KalmanState(x, prior_variance * np.eye(STATE_DIM))


def white_noise_cov(sigma2: float, dt: float) -> np.ndarray:
    """Discrete white-noise process covariance: block diagonal of sigma2 * W_i.

    Each 2x2 block is [[dt^4/4, dt^3/2], [dt^3/2, dt^2]], i.e. sigma2 * v v^T
    with v = (dt^2/2, dt); every block has rank 1.
    """
    if sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    if dt <= 0:
        raise ValueError("dt must be positive")
    block = np.array(
        [
            [0.25 * dt**4, 0.5 * dt**3],
            [0.5 * dt**3, dt**2],
        ]
    )
    q = np.zeros((STATE_DIM, STATE_DIM))
    for i in range(POSE_FIELD_COUNT):
        q[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] = sigma2 * block
    return q


def transition_matrix(dt: float) -> np.ndarray:
    f = np.eye(STATE_DIM)
    f[0::2, 1::2] = np.eye(POSE_FIELD_COUNT) * dt
    return f


def observation_matrix() -> np.ndarray:
    h = np.zeros((POSE_FIELD_COUNT, STATE_DIM))
    h[np.arange(POSE_FIELD_COUNT), np.arange(POSE_FIELD_COUNT) * 2] = 1.0
    return h


def predict(state: KalmanState, settings: FilterSettings) -> KalmanState:
    """Constant-velocity time update: pos += dt * vel, covariance grows by the process noise."""
    f = transition_matrix(settings.dt)
    x = f @ state.state
    p = f @ state.covariance @ f.T + white_noise_cov(settings.process_sigma2, settings.dt)
    return KalmanState(x, 0.5 * (p + p.T))


def update(
    state: KalmanState, observation: np.ndarray, settings: FilterSettings
) -> tuple[KalmanState, float]:
    """Measurement update with R = v * I; returns the new state and the innovation norm."""
    observation = np.asarray(observation, dtype=np.float64)
    if observation.shape != (POSE_FIELD_COUNT,):
        raise ValueError(f"observation must have {POSE_FIELD_COUNT} components")
    if not np.all(np.isfinite(observation)):
        raise ValueError("observation contains non-finite values")
    h = observation_matrix()
    innovation = observation - state.state[0::2]
    s = state.covariance[0::2, 0::2] + settings.observation_noise * np.eye(POSE_FIELD_COUNT)
    gain = np.linalg.solve(s, h @ state.covariance).T  # P H^T S^-1
    x = state.state + gain @ innovation
    # Joseph form keeps the covariance PSD through long runs
    ikh = np.eye(STATE_DIM) - gain @ h
    p = ikh @ state.covariance @ ikh.T + settings.observation_noise * (gain @ gain.T)
    return KalmanState(x, 0.5 * (p + p.T)), float(np.linalg.norm(innovation))


class PoseFilter:
    """Stateful predict/update wrapper over one pose sequence.

    Not thread-safe; use one instance per sequence.
    """

    def __init__(self, settings: FilterSettings | None = None):
        self.settings = settings if settings is not None else settings_for_mode(Mode.SLOW)
        self.state: KalmanState | None = None
        self.last_output: np.ndarray | None = None

    def step(self, observation: np.ndarray) -> tuple[np.ndarray, float]:
        """Predict, fold in one observation, and return (filtered positions, residual norm)."""
        if self.state is None:
            self.state = initial_state(observation)
            residual = 0.0
        else:
            self.state = predict(self.state, self.settings)
            self.state, residual = update(self.state, observation, self.settings)
        self.last_output = self.state.positions().copy()
        return self.last_output, residual

    def repeat_last(self) -> np.ndarray:
        if self.last_output is None:
            raise RuntimeError("no prediction to repeat yet")
        return self.last_output


def lnes_information(image: WindowImage) -> float:
    """Total information content of an LNES image: the sum over all values.

    Normalized timestamps weight recent events more, so this measures how
    much fresh signal the window carries.
    """
    if image.kind is not RepresentationKind.LNES:
        raise ValueError(f"information content is defined for LNES images, got {image.kind}")
    return float(image.channels.sum())


class Action(Enum):
    EMIT_NEW_PREDICTION = "emit"
    REPEAT_LAST = "repeat"
    DEFER = "defer"


@dataclass
class Scheduler:
    """Window pacing and filter-mode switching state.

    ``residual_window`` controls how many recent probe residuals are averaged
    for the mode decision (1 = per-update, the default).
    """

    residual_window: int = 1
    pending_event_count: int = 0
    mode: Mode = Mode.SLOW
    info_ring: deque = field(default_factory=lambda: deque(maxlen=INFORMATION_RING_SIZE))
    probe: PoseFilter = field(default_factory=lambda: PoseFilter(settings_for_mode(Mode.SLOW)))
    _residuals: deque = field(default_factory=deque)

    def observe(self, raw_pose: np.ndarray) -> None:
        """Feed one raw prediction to the probe filter (call after each emitted pose)."""
        _, residual = self.probe.step(raw_pose)
        self._residuals.append(residual)
        while len(self._residuals) > self.residual_window:
            self._residuals.popleft()

    @property
    def probe_residual(self) -> float:
        if not self._residuals:
            return 0.0
        return float(sum(self._residuals) / len(self._residuals))


def schedule(
    scheduler: Scheduler,
    new_events: int,
    latest_lnes: WindowImage | None,
    main_filter: PoseFilter | None = None,
) -> Action:
    """Decide what to do with the next window and switch the main filter's mode.

    Windows arrive with ``new_events`` fresh events since the last generated
    one; fewer than 10 accumulate until enough arrive. Once a window is
    generated its information content joins a 16-slot ring, and a full ring
    averaging below 300 marks the scene stationary. The probe residual (fed
    via ``Scheduler.observe``) selects the slow or fast setting for
    ``main_filter``.
    """
    scheduler.pending_event_count += new_events
    if scheduler.pending_event_count < MIN_EVENTS_PER_WINDOW:
        return Action.DEFER
    scheduler.pending_event_count = 0

    scheduler.mode = mode_for_residual(scheduler.probe_residual)
    if main_filter is not None:
        main_filter.settings = settings_for_mode(scheduler.mode, dt=main_filter.settings.dt)

    if latest_lnes is not None:
        scheduler.info_ring.append(lnes_information(latest_lnes))
    if (
        len(scheduler.info_ring) == INFORMATION_RING_SIZE
        and sum(scheduler.info_ring) / INFORMATION_RING_SIZE < STATIONARY_INFORMATION_MEAN
    ):
        return Action.REPEAT_LAST
    return Action.EMIT_NEW_PREDICTION
