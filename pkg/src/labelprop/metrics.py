"""Region, boundary, keypoint, and semantic-part metrics.

All functions are pure; per-sequence scoring is embarrassingly parallel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from labelprop.grids import KeypointSet

__all__ = [
    "SequenceScore",
    "MetricsReport",
    "jaccard",
    "mask_boundary",
    "boundary_f",
    "default_boundary_tolerance",
    "recall_over_threshold",
    "davis_aggregate",
    "pck",
    "pck_counts",
    "miou",
]

_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class SequenceScore:
    """Region and boundary scores for one (sequence, object) pair."""

    sequence: str
    object_id: int | str
    j: float
    f: float

    def __post_init__(self):
        for name, value in (("j", self.j), ("f", self.f)):
            if not math.isfinite(value) or not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be finite in [0, 1], got {value}")


@dataclass(frozen=True)
class MetricsReport:
    j_mean: float
    j_recall: float
    f_mean: float
    f_recall: float
    jf_mean: float
    rows: tuple[SequenceScore, ...] = ()
    pck: dict[float, float] | None = None
    miou: float | None = None

    def __post_init__(self):
        if abs(self.jf_mean - (self.j_mean + self.f_mean) / 2.0) > 1e-9:
            raise ValueError("jf_mean must equal (j_mean + f_mean) / 2")
        for name in ("j_recall", "f_recall"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


def _as_bool_pair(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=bool)
    g = np.asarray(gt, dtype=bool)
    if p.shape != g.shape:
        raise ValueError(f"mask shapes differ: {p.shape} vs {g.shape}")
    if p.ndim != 2:
        raise ValueError(f"masks must be 2-D, got shape {p.shape}")
    return p, g


def jaccard(pred, gt) -> float:
    """Intersection over union; two empty masks count as a perfect match."""
    p, g = _as_bool_pair(pred, gt)
    union = np.logical_or(p, g).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(p, g).sum() / union)


def mask_boundary(mask) -> np.ndarray:
    """Foreground pixels with a 4-neighbor that is background or off-image."""
    m = np.asarray(mask, dtype=bool)
    interior = ndimage.binary_erosion(m, structure=_CROSS, border_value=0)
    return m & ~interior


def _disk(radius: float) -> np.ndarray:
    r = int(np.floor(radius))
    offsets = np.arange(-r, r + 1)
    return (offsets[:, None] ** 2 + offsets[None, :] ** 2) <= radius * radius


def default_boundary_tolerance(height: int, width: int, fraction: float = 0.008) -> int:
    """Pixel tolerance proportional to the image diagonal."""
    return int(np.ceil(fraction * np.hypot(height, width)))


def boundary_f(pred, gt, tolerance: float) -> float:
    """Boundary F-measure with dilation-based matching at the given radius.

    Precision is the fraction of predicted boundary pixels within the
    tolerance of the ground-truth boundary, recall the symmetric fraction;
    F = 2PR/(P+R).  Both boundaries empty scores 1, exactly one empty 0.
    """
    if tolerance < 0:
        raise ValueError(f"tolerance must be >= 0, got {tolerance}")
    p, g = _as_bool_pair(pred, gt)
    pb = mask_boundary(p)
    gb = mask_boundary(g)
    np_b = int(pb.sum())
    ng_b = int(gb.sum())
    if np_b == 0 and ng_b == 0:
        return 1.0
    if np_b == 0 or ng_b == 0:
        return 0.0
    disk = _disk(tolerance)
    gt_reach = ndimage.binary_dilation(gb, structure=disk)
    pred_reach = ndimage.binary_dilation(pb, structure=disk)
    precision = float((pb & gt_reach).sum() / np_b)
    recall = float((gb & pred_reach).sum() / ng_b)
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def recall_over_threshold(scores, threshold: float) -> float:
    """Fraction of scores strictly greater than the threshold."""
    values = list(scores)
    if not values:
        raise ValueError("recall over an empty score list is undefined")
    return float(sum(1 for v in values if v > threshold) / len(values))


def davis_aggregate(
    scores: list[SequenceScore], recall_threshold: float = 0.5,
    per_sequence: bool = False,
) -> MetricsReport:
    """Means and recalls over (sequence, object) entries.

    With ``per_sequence`` the entries of each sequence are averaged first and
    the means/recalls run over sequences; the default averages straight over
    (sequence, object) pairs.
    """
    if not scores:
        raise ValueError("need at least one sequence score")

    def _mean(values):
        # canonical (sorted) reduction order: permuting the input cannot
        # change the result
        return float(np.mean(np.sort(np.asarray(values, dtype=np.float64))))

    if per_sequence:
        by_seq: dict[str, list[SequenceScore]] = {}
        for s in scores:
            by_seq.setdefault(s.sequence, []).append(s)
        j_vals = [_mean([s.j for s in group]) for group in by_seq.values()]
        f_vals = [_mean([s.f for s in group]) for group in by_seq.values()]
    else:
        j_vals = [s.j for s in scores]
        f_vals = [s.f for s in scores]
    j_mean = _mean(j_vals)
    f_mean = _mean(f_vals)
    return MetricsReport(
        j_mean=j_mean,
        j_recall=recall_over_threshold(j_vals, recall_threshold),
        f_mean=f_mean,
        f_recall=recall_over_threshold(f_vals, recall_threshold),
        jf_mean=(j_mean + f_mean) / 2.0,
        rows=tuple(scores),
    )


def pck_counts(
    pred: KeypointSet, gt: KeypointSet, alpha: float, norm: float
) -> tuple[int, int]:
    """(correct, total) over ground-truth-visible keypoints.

    A prediction is correct when it is visible and within alpha * norm
    (euclidean) of the ground truth; missing predictions count as incorrect.
    """
    if norm <= 0.0:
        raise ValueError(f"norm must be > 0, got {norm}")
    correct = 0
    total = 0
    for g in gt.points:
        if not g.visible:
            continue
        total += 1
        p = pred.get(g.class_id)
        if p is None or not p.visible:
            continue
        if math.hypot(p.x - g.x, p.y - g.y) <= alpha * norm:
            correct += 1
    return correct, total


def pck(pred: KeypointSet, gt: KeypointSet, alpha: float, norm: float) -> float:
    """Fraction of correctly located keypoints; 0.0 when none are visible."""
    correct, total = pck_counts(pred, gt, alpha, norm)
    if total == 0:
        return 0.0
    return correct / total


def miou(pred, gt, num_classes: int, ignore: set[int] | None = None) -> float:
    """Mean of per-class IoU over classes present in either map."""
    p = np.asarray(pred, dtype=np.int64)
    g = np.asarray(gt, dtype=np.int64)
    if p.shape != g.shape:
        raise ValueError(f"class map shapes differ: {p.shape} vs {g.shape}")
    if p.min() < 0 or g.min() < 0 or p.max() >= num_classes or g.max() >= num_classes:
        raise ValueError(f"class ids must lie in [0, {num_classes})")
    ignore = ignore or set()
    ious = []
    for class_id in range(num_classes):
        if class_id in ignore:
            continue
        pm = p == class_id
        gm = g == class_id
        union = int(np.logical_or(pm, gm).sum())
        if union == 0:
            continue  # class absent from both maps
        ious.append(float(np.logical_and(pm, gm).sum() / union))
    if not ious:
        raise ValueError("no classes present outside the ignore set")
    return float(np.mean(ious))
