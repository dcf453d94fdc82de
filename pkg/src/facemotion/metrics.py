"""Evaluation metrics for generated facial motion.

All metrics operate in zero-pose space (global rotation stripped) so they
respond to facial deformation only. Correlation metrics return None instead
of a number when an input series has zero variance; the aggregate report
records such cases as undefined flags rather than poisoning averages with
NaN or fake zeros.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .errors import IncompatibleShapeError, ModelConfigError
from .motion_core import (
    BlendshapeModel,
    FlameFrame,
    MotionSequence,
    forward_vertices,
    mouth_opening,
    mouth_width,
    sequence_vertices,
)


@dataclass
class MetricsConfig:
    fps: float = 25.0
    epsilon: float = 1e-8
    peak_min_prominence: float = 0.05  # fraction of signal range
    peak_min_distance: int = 3  # frames

    def __post_init__(self):
        if not self.fps > 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not 0.0 <= self.peak_min_prominence < 1.0:
            raise ValueError(f"peak_min_prominence must be in [0, 1), got {self.peak_min_prominence}")
        if self.peak_min_distance < 1:
            raise ValueError(f"peak_min_distance must be >= 1, got {self.peak_min_distance}")

    def to_dict(self) -> Dict[str, float]:
        return {
            "fps": self.fps,
            "epsilon": self.epsilon,
            "peak_min_prominence": self.peak_min_prominence,
            "peak_min_distance": self.peak_min_distance,
            "std_convention": "population",
        }


@dataclass
class MetricsReport:
    mod_mm: float
    ufd: float
    temporal_corr: Optional[float]
    velocity_corr: Optional[float]
    lip_width_corr: Optional[float]
    liveliness_ratio: float
    peak_align_ms: Optional[float]
    undefined: Dict[str, str] = field(default_factory=dict)
    config: MetricsConfig = field(default_factory=MetricsConfig)

    def to_dict(self) -> Dict[str, object]:
        return {
            "values": {
                "mod_mm": self.mod_mm,
                "ufd": self.ufd,
                "temporal_corr": self.temporal_corr,
                "velocity_corr": self.velocity_corr,
                "lip_width_corr": self.lip_width_corr,
                "liveliness_ratio": self.liveliness_ratio,
                "peak_align_ms": self.peak_align_ms,
            },
            "undefined": dict(self.undefined),
            "config": self.config.to_dict(),
        }


def opening_series(model: BlendshapeModel, m: MotionSequence) -> np.ndarray:
    """Mouth-opening distance per frame, zero-pose space."""
    return np.array([mouth_opening(model, v) for v in sequence_vertices(model, m, zero_posed=True)])


def width_series(model: BlendshapeModel, m: MotionSequence) -> np.ndarray:
    """Mouth-width distance per frame, zero-pose space."""
    return np.array([mouth_width(model, v) for v in sequence_vertices(model, m, zero_posed=True)])


def mod_metric(model: BlendshapeModel, pred: MotionSequence, gt: MotionSequence) -> float:
    """Mean absolute mouth-opening error in millimeters."""
    if len(pred) != len(gt):
        raise IncompatibleShapeError(f"sequence lengths differ: {len(pred)} vs {len(gt)}")
    if len(pred) == 0:
        raise ValueError("cannot evaluate empty sequences")
    o_pred = opening_series(model, pred)
    o_gt = opening_series(model, gt)
    return float(np.mean(np.abs(o_pred - o_gt)) * 1000.0)


def ufd(model: BlendshapeModel, m: MotionSequence) -> float:
    """Upper-face dynamics: mean frame-to-frame change of the per-vertex
    displacement norm relative to the neutral face, scaled by 1e5."""
    if len(m) < 2:
        raise ValueError("ufd needs at least 2 frames")
    idx = model.region("upper_face")
    if idx.size == 0:
        raise ModelConfigError("upper_face region is empty")
    neutral = forward_vertices(model, FlameFrame.zero()).vertices[idx]
    verts = sequence_vertices(model, m, zero_posed=True)
    disp = np.stack([np.linalg.norm(v.vertices[idx] - neutral, axis=1) for v in verts])
    return float(np.mean(np.abs(np.diff(disp, axis=0))) * 1e5)


def pearson(x: np.ndarray, y: np.ndarray) -> Optional[float]:
    """Pearson correlation; None when either series has zero variance."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise IncompatibleShapeError("series must be equal-length 1-D arrays")
    if x.size < 2:
        raise ValueError("correlation needs at least 2 samples")
    # a constant series has zero variance even when mean roundoff leaves
    # residuals of ~1e-18; the exact range test catches that
    if x.max() == x.min() or y.max() == y.min():
        return None
    xc = x - x.mean()
    yc = y - y.mean()
    sx = float(np.sqrt(np.mean(xc**2)))
    sy = float(np.sqrt(np.mean(yc**2)))
    if sx == 0.0 or sy == 0.0:
        return None
    value = float(np.mean(xc * yc) / (sx * sy))
    if abs(value) > 1.0 + 1e-8:
        raise AssertionError(f"correlation {value} outside [-1, 1]")
    return min(1.0, max(-1.0, value))


def temporal_corr(o_pred: np.ndarray, o_gt: np.ndarray) -> Optional[float]:
    """Pearson correlation of the mouth-opening series."""
    return pearson(o_pred, o_gt)


def velocity_corr(o_pred: np.ndarray, o_gt: np.ndarray) -> Optional[float]:
    """Pearson correlation of first differences of the opening series."""
    o_pred = np.asarray(o_pred, dtype=np.float64)
    o_gt = np.asarray(o_gt, dtype=np.float64)
    if o_pred.size < 3 or o_gt.size < 3:
        raise ValueError("velocity correlation needs at least 3 samples")
    return pearson(np.diff(o_pred), np.diff(o_gt))


def lip_width_corr(w_pred: np.ndarray, w_gt: np.ndarray) -> Optional[float]:
    """Pearson correlation of the mouth-width series."""
    return pearson(w_pred, w_gt)


def liveliness(o_pred: np.ndarray, o_gt: np.ndarray, epsilon: float = 1e-8) -> float:
    """Velocity-energy ratio sigma(v_pred) / (sigma(v_gt) + epsilon).

    Standard deviations are population (ddof=0) so length-2 series are
    deterministic.
    """
    o_pred = np.asarray(o_pred, dtype=np.float64)
    o_gt = np.asarray(o_gt, dtype=np.float64)
    if o_pred.size < 2 or o_gt.size < 2:
        raise ValueError("liveliness needs at least 2 samples")
    s_pred = float(np.std(np.diff(o_pred)))
    s_gt = float(np.std(np.diff(o_gt)))
    return s_pred / (s_gt + epsilon)


def detect_peaks(x: np.ndarray, min_prominence_frac: float, min_distance: int) -> np.ndarray:
    """Indices of local maxima filtered by prominence and spacing.

    Candidates are strict local maxima. Prominence is the peak height minus
    the higher of the two valley floors found scanning outward until a
    higher sample (or the signal edge); peaks below min_prominence_frac of
    the signal range are dropped. Remaining peaks are kept tallest-first
    (ties to the lower index), discarding any within min_distance frames of
    an already kept peak.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if n < 3:
        return np.empty(0, dtype=np.int64)
    rng_span = float(x.max() - x.min())
    if rng_span == 0.0:
        return np.empty(0, dtype=np.int64)
    cand = np.flatnonzero((x[1:-1] > x[:-2]) & (x[1:-1] > x[2:])) + 1
    threshold = min_prominence_frac * rng_span

    kept: List[int] = []
    heights: List[float] = []
    for i in cand:
        left_min = x[i]
        j = i - 1
        while j >= 0 and x[j] <= x[i]:
            left_min = min(left_min, x[j])
            j -= 1
        right_min = x[i]
        j = i + 1
        while j < n and x[j] <= x[i]:
            right_min = min(right_min, x[j])
            j += 1
        prominence = x[i] - max(left_min, right_min)
        if prominence >= threshold:
            kept.append(int(i))
            heights.append(float(x[i]))

    order = sorted(range(len(kept)), key=lambda k: (-heights[k], kept[k]))
    accepted: List[int] = []
    for k in order:
        i = kept[k]
        if all(abs(i - a) >= min_distance for a in accepted):
            accepted.append(i)
    return np.array(sorted(accepted), dtype=np.int64)


def peak_align(o_pred: np.ndarray, o_gt: np.ndarray, cfg: MetricsConfig) -> Optional[float]:
    """Median absolute time offset (ms) between each reference peak and its
    nearest predicted peak; None when either series has no detected peak."""
    p_pred = detect_peaks(o_pred, cfg.peak_min_prominence, cfg.peak_min_distance)
    p_gt = detect_peaks(o_gt, cfg.peak_min_prominence, cfg.peak_min_distance)
    if p_pred.size == 0 or p_gt.size == 0:
        return None
    diffs = np.array([np.min(np.abs(p_pred - g)) for g in p_gt], dtype=np.float64)
    return float(np.median(diffs) * 1000.0 / cfg.fps)


def full_report(
    model: BlendshapeModel,
    pred: MotionSequence,
    gt: MotionSequence,
    cfg: Optional[MetricsConfig] = None,
) -> MetricsReport:
    """All seven metrics on an aligned prediction/reference pair."""
    cfg = cfg or MetricsConfig(fps=gt.fps)
    if len(pred) != len(gt):
        raise IncompatibleShapeError(f"sequence lengths differ: {len(pred)} vs {len(gt)}")
    if len(pred) < 3:
        raise ValueError("full report needs at least 3 frames")
    o_pred = opening_series(model, pred)
    o_gt = opening_series(model, gt)
    w_pred = width_series(model, pred)
    w_gt = width_series(model, gt)

    undefined: Dict[str, str] = {}
    t_corr = temporal_corr(o_pred, o_gt)
    if t_corr is None:
        undefined["temporal_corr"] = "zero variance"
    v_corr = velocity_corr(o_pred, o_gt)
    if v_corr is None:
        undefined["velocity_corr"] = "zero variance"
    w_corr = lip_width_corr(w_pred, w_gt)
    if w_corr is None:
        undefined["lip_width_corr"] = "zero variance"
    align = peak_align(o_pred, o_gt, cfg)
    if align is None:
        undefined["peak_align_ms"] = "no peaks detected"

    return MetricsReport(
        mod_mm=float(np.mean(np.abs(o_pred - o_gt)) * 1000.0),
        ufd=ufd(model, pred),
        temporal_corr=t_corr,
        velocity_corr=v_corr,
        lip_width_corr=w_corr,
        liveliness_ratio=liveliness(o_pred, o_gt, cfg.epsilon),
        peak_align_ms=align,
        undefined=undefined,
        config=cfg,
    )
