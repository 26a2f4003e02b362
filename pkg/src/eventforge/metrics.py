"""Hand-pose evaluation: root-aligned 3D-PCK, palm-normalized 2D-PCK and AUC.

Keypoint sequences are (frames, 21, dims) arrays. 3D errors are computed
after translating each frame so the root joint (wrist) sits at the origin of
both prediction and ground truth; 2D errors are divided by the sequence's
average palm length (wrist to middle-finger MCP in the ground truth).
Correctness is inclusive: an error exactly at the threshold counts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

KEYPOINT_COUNT = 21
WRIST_INDEX = 0
MIDDLE_MCP_INDEX = 9


@dataclass(frozen=True, eq=False)
class KeypointSet:
    """One frame of 21 keypoints, 2-D (pixels) or 3-D (millimeters)."""

    points: np.ndarray
    wrist_index: int = WRIST_INDEX
    middle_mcp_index: int = MIDDLE_MCP_INDEX

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64)
        object.__setattr__(self, "points", pts)
        if pts.shape[0] != KEYPOINT_COUNT or pts.shape[-1] not in (2, 3) or pts.ndim != 2:
            raise ValueError(f"expected ({KEYPOINT_COUNT}, 2 or 3) points, got {pts.shape}")
        for idx in (self.wrist_index, self.middle_mcp_index):
            if not 0 <= idx < KEYPOINT_COUNT:
                raise ValueError(f"keypoint index {idx} out of range")


class PckCurve(NamedTuple):
    """Fractions of correct keypoints at each threshold."""

    thresholds: np.ndarray
    fractions: np.ndarray


def default_thresholds(max_threshold: float) -> np.ndarray:
    """0 plus 100 evenly spaced thresholds up to ``max_threshold``."""
    return np.linspace(0.0, max_threshold, 101)


def stack_keypoints(frames: "list[KeypointSet] | np.ndarray", dims: int) -> np.ndarray:
    if isinstance(frames, np.ndarray):
        arr = np.asarray(frames, dtype=np.float64)
    else:
        arr = np.stack([f.points for f in frames]) if len(frames) else np.empty((0, KEYPOINT_COUNT, dims))
    if arr.ndim != 3 or arr.shape[1] != KEYPOINT_COUNT or arr.shape[2] != dims:
        raise ValueError(f"expected (frames, {KEYPOINT_COUNT}, {dims}) keypoints, got {arr.shape}")
    return arr


def _curve(errors: np.ndarray, thresholds: np.ndarray, average: str) -> PckCurve:
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if thresholds.ndim != 1 or len(thresholds) < 1:
        raise ValueError("thresholds must be a non-empty 1-D sequence")
    if np.any(np.diff(thresholds) < 0):
        raise ValueError("thresholds must be sorted ascending")
    correct = errors[..., None] <= thresholds  # (frames, joints, thresholds)
    if average == "pool":
        fractions = correct.reshape(-1, len(thresholds)).mean(axis=0)
    elif average == "per_frame":
        fractions = correct.mean(axis=1).mean(axis=0)
    else:
        raise ValueError(f"average must be 'pool' or 'per_frame', got {average!r}")
    return PckCurve(thresholds, fractions)


def pck3d(
    pred: "list[KeypointSet] | np.ndarray",
    gt: "list[KeypointSet] | np.ndarray",
    thresholds: np.ndarray | None = None,
    root_index: int = WRIST_INDEX,
    average: str = "pool",
) -> PckCurve:
    """Root-aligned 3D-PCK curve; thresholds in millimeters (default 0..100 mm)."""
    p = stack_keypoints(pred, 3)
    g = stack_keypoints(gt, 3)
    if p.shape[0] != g.shape[0]:
        raise ValueError(f"sequence lengths differ: {p.shape[0]} predictions vs {g.shape[0]} ground truth")
    if p.shape[0] == 0:
        raise ValueError("empty sequences")
    p = p - p[:, root_index : root_index + 1, :]
    g = g - g[:, root_index : root_index + 1, :]
    errors = np.linalg.norm(p - g, axis=2)
    if thresholds is None:
        thresholds = default_thresholds(100.0)
    return _curve(errors, thresholds, average)


def pck2d_palm(
    pred: "list[KeypointSet] | np.ndarray",
    gt: "list[KeypointSet] | np.ndarray",
    thresholds: np.ndarray | None = None,
    wrist_index: int = WRIST_INDEX,
    middle_mcp_index: int = MIDDLE_MCP_INDEX,
    average: str = "pool",
) -> PckCurve:
    """Palm-normalized 2D-PCK; thresholds are fractions of the palm length (default 0..1)."""
    p = stack_keypoints(pred, 2)
    g = stack_keypoints(gt, 2)
    if p.shape[0] != g.shape[0]:
        raise ValueError(f"sequence lengths differ: {p.shape[0]} predictions vs {g.shape[0]} ground truth")
    if p.shape[0] == 0:
        raise ValueError("empty sequences")
    palm = float(np.mean(np.linalg.norm(g[:, wrist_index] - g[:, middle_mcp_index], axis=1)))
    if palm <= 0.0:
        raise ValueError("palm length is zero; wrist and middle MCP coincide in the ground truth")
    errors = np.linalg.norm(p - g, axis=2) / palm
    if thresholds is None:
        thresholds = default_thresholds(1.0)
    return _curve(errors, thresholds, average)


def auc(curve: PckCurve) -> float:
    """Trapezoidal area under the curve, normalized by the threshold span."""
    thresholds = np.asarray(curve.thresholds, dtype=np.float64)
    values = np.asarray(curve.fractions, dtype=np.float64)
    if len(thresholds) < 2:
        raise ValueError("AUC needs at least two thresholds")
    if np.any(np.diff(thresholds) < 0):
        raise ValueError("thresholds must be sorted ascending")
    span = thresholds[-1] - thresholds[0]
    if span <= 0:
        raise ValueError("threshold span is zero")
    return float(np.trapezoid(values, thresholds) / span)
