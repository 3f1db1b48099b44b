"""Core grid types and conversions between feature/label layouts.

Feature maps live as (C, H, W) grids or flattened (C, N) matrices with
N = H * W and column j at raster location (j // W, j % W).  Label scores
use the same layout with L class planes.  All types are immutable after
construction and safe to share across workers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "FeatureGrid",
    "FeatureMatrix",
    "LabelGrid",
    "LabelMatrix",
    "Keypoint",
    "KeypointSet",
    "flatten",
    "unflatten",
    "flatten_labels",
    "unflatten_labels",
    "l2_normalize",
    "resize_scores",
    "argmax_labels",
    "onehot_downsample",
    "keypoints_to_labelgrid",
    "labelgrid_to_keypoints",
]

_UNIT_NORM_ATOL = 1e-5


def _readonly_f32(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float32, order="C", copy=True)
    arr.setflags(write=False)
    return arr


def _check_unit_columns(values: np.ndarray) -> None:
    # columns must have unit L2 norm or be exactly all-zero
    norms = np.linalg.norm(values.astype(np.float64), axis=0)
    ok = (np.abs(norms - 1.0) <= _UNIT_NORM_ATOL) | (norms == 0.0)
    if not bool(np.all(ok)):
        raise ValueError("normalized=True but some columns are not unit/zero")


@dataclass(frozen=True)
class FeatureGrid:
    """C-channel feature map over an H x W grid, layout (C, H, W)."""

    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        arr = _readonly_f32(self.values)
        if arr.ndim != 3:
            raise ValueError(f"feature grid must be (C, H, W), got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ValueError(f"feature grid dims must all be >= 1, got {arr.shape}")
        if not bool(np.isfinite(arr).all()):
            raise ValueError("feature grid contains non-finite values")
        if self.normalized:
            _check_unit_columns(arr.reshape(arr.shape[0], -1))
        object.__setattr__(self, "values", arr)

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class FeatureMatrix:
    """Flattened feature map: (C, N) columns in raster order, dims retained."""

    values: np.ndarray
    height: int
    width: int
    normalized: bool = False

    def __post_init__(self):
        arr = _readonly_f32(self.values)
        if arr.ndim != 2:
            raise ValueError(f"feature matrix must be (C, N), got shape {arr.shape}")
        if self.height < 1 or self.width < 1:
            raise ValueError("feature matrix dims must be >= 1")
        if arr.shape[1] != self.height * self.width:
            raise ValueError(
                f"N={arr.shape[1]} does not match H*W={self.height * self.width}"
            )
        if not bool(np.isfinite(arr).all()):
            raise ValueError("feature matrix contains non-finite values")
        if self.normalized:
            _check_unit_columns(arr)
        object.__setattr__(self, "values", arr)

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def locations(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class LabelGrid:
    """Soft class scores over an H x W grid, layout (L, H, W), values in [0, 1]."""

    scores: np.ndarray

    def __post_init__(self):
        arr = _readonly_f32(self.scores)
        if arr.ndim != 3:
            raise ValueError(f"label grid must be (L, H, W), got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ValueError(f"label grid dims must all be >= 1, got {arr.shape}")
        if not bool(np.isfinite(arr).all()):
            raise ValueError("label grid contains non-finite values")
        if float(arr.min()) < 0.0 or float(arr.max()) > 1.0:
            raise ValueError("label scores must lie in [0, 1]")
        object.__setattr__(self, "scores", arr)

    @property
    def classes(self) -> int:
        return self.scores.shape[0]

    @property
    def height(self) -> int:
        return self.scores.shape[1]

    @property
    def width(self) -> int:
        return self.scores.shape[2]

    @classmethod
    def from_class_map(cls, class_map, num_classes: int | None = None) -> "LabelGrid":
        """One-hot reference grid from an integer (H, W) class map."""
        m = np.asarray(class_map)
        if m.ndim != 2:
            raise ValueError(f"class map must be 2-D, got shape {m.shape}")
        if m.size == 0:
            raise ValueError("class map is empty")
        m = m.astype(np.int64)
        if m.min() < 0:
            raise ValueError("class ids must be >= 0")
        n = int(m.max()) + 1 if num_classes is None else int(num_classes)
        if n < 1 or m.max() >= n:
            raise ValueError(f"class ids exceed num_classes={n}")
        planes = np.zeros((n,) + m.shape, dtype=np.float32)
        hh, ww = np.indices(m.shape)
        planes[m, hh, ww] = 1.0
        return cls(planes)


@dataclass(frozen=True)
class LabelMatrix:
    """Flattened label scores: (L, N) columns in raster order, dims retained."""

    scores: np.ndarray
    height: int
    width: int

    def __post_init__(self):
        arr = _readonly_f32(self.scores)
        if arr.ndim != 2:
            raise ValueError(f"label matrix must be (L, N), got shape {arr.shape}")
        if self.height < 1 or self.width < 1:
            raise ValueError("label matrix dims must be >= 1")
        if arr.shape[1] != self.height * self.width:
            raise ValueError(
                f"N={arr.shape[1]} does not match H*W={self.height * self.width}"
            )
        if not bool(np.isfinite(arr).all()):
            raise ValueError("label matrix contains non-finite values")
        if float(arr.min()) < 0.0 or float(arr.max()) > 1.0:
            raise ValueError("label scores must lie in [0, 1]")
        object.__setattr__(self, "scores", arr)

    @property
    def classes(self) -> int:
        return self.scores.shape[0]

    @property
    def locations(self) -> int:
        return self.scores.shape[1]


@dataclass(frozen=True)
class Keypoint:
    class_id: int
    x: float
    y: float
    visible: bool = True


@dataclass(frozen=True)
class KeypointSet:
    """A set of keypoints with distinct class ids; x is horizontal, y vertical."""

    points: tuple[Keypoint, ...] = ()

    def __post_init__(self):
        pts = tuple(self.points)
        ids = [p.class_id for p in pts]
        if len(ids) != len(set(ids)):
            raise ValueError("keypoint class ids must be distinct within a set")
        object.__setattr__(self, "points", pts)

    def get(self, class_id: int) -> Keypoint | None:
        for p in self.points:
            if p.class_id == class_id:
                return p
        return None


def flatten(grid: FeatureGrid) -> FeatureMatrix:
    """Flatten a (C, H, W) grid into a (C, H*W) matrix, raster column order."""
    c, h, w = grid.values.shape
    return FeatureMatrix(
        grid.values.reshape(c, h * w), height=h, width=w, normalized=grid.normalized
    )


def unflatten(matrix: FeatureMatrix) -> FeatureGrid:
    """Inverse of :func:`flatten`; bitwise round trip."""
    c = matrix.channels
    return FeatureGrid(
        matrix.values.reshape(c, matrix.height, matrix.width),
        normalized=matrix.normalized,
    )


def flatten_labels(grid: LabelGrid) -> LabelMatrix:
    l, h, w = grid.scores.shape
    return LabelMatrix(grid.scores.reshape(l, h * w), height=h, width=w)


def unflatten_labels(matrix: LabelMatrix) -> LabelGrid:
    l = matrix.classes
    return LabelGrid(matrix.scores.reshape(l, matrix.height, matrix.width))


def l2_normalize(matrix: FeatureMatrix) -> FeatureMatrix:
    """Scale every column to unit L2 norm; all-zero columns pass through."""
    vals = matrix.values.astype(np.float64)
    norms = np.linalg.norm(vals, axis=0, keepdims=True)
    safe = np.where(norms > 0.0, norms, 1.0)
    out = (vals / safe).astype(np.float32)
    return FeatureMatrix(out, height=matrix.height, width=matrix.width, normalized=True)


def _axis_resize_linear(arr: np.ndarray, new_size: int, axis: int) -> np.ndarray:
    # align-corners-true linear interpolation along one axis
    old_size = arr.shape[axis]
    if new_size == old_size:
        return arr
    if old_size == 1:
        return np.repeat(arr, new_size, axis=axis)
    if new_size == 1:
        pos = np.zeros(1)
    else:
        pos = np.arange(new_size) * ((old_size - 1) / (new_size - 1))
    lo = np.floor(pos).astype(np.int64)
    lo = np.minimum(lo, old_size - 2)
    frac = pos - lo
    a = np.take(arr, lo, axis=axis)
    b = np.take(arr, lo + 1, axis=axis)
    shape = [1] * arr.ndim
    shape[axis] = new_size
    frac = frac.reshape(shape)
    return a * (1.0 - frac) + b * frac


def resize_scores(grid: LabelGrid, height: int, width: int) -> LabelGrid:
    """Bilinear (align-corners) resize of each class plane, clipped to [0, 1]."""
    if height < 1 or width < 1:
        raise ValueError("target dims must be >= 1")
    if height == grid.height and width == grid.width:
        return LabelGrid(grid.scores)
    planes = grid.scores.astype(np.float64)
    planes = _axis_resize_linear(planes, height, axis=1)
    planes = _axis_resize_linear(planes, width, axis=2)
    return LabelGrid(np.clip(planes, 0.0, 1.0).astype(np.float32))


def argmax_labels(grid: LabelGrid) -> np.ndarray:
    """Per-location class of maximum score; ties go to the lowest class id."""
    return np.argmax(grid.scores, axis=0).astype(np.int64)


def onehot_downsample(class_map, height: int, width: int) -> LabelGrid:
    """Nearest-neighbor resample of an integer class map, then one-hot encode.

    Samples at output raster cell centers; the class count is taken from the
    full-resolution map so planes stay stable even when a small class drops
    out of the sampled grid.
    """
    m = np.asarray(class_map)
    if m.ndim != 2:
        raise ValueError(f"class map must be 2-D, got shape {m.shape}")
    if height < 1 or width < 1:
        raise ValueError("target dims must be >= 1")
    src_h, src_w = m.shape
    rows = np.minimum(
        np.floor((np.arange(height) + 0.5) * (src_h / height)).astype(np.int64),
        src_h - 1,
    )
    cols = np.minimum(
        np.floor((np.arange(width) + 0.5) * (src_w / width)).astype(np.int64),
        src_w - 1,
    )
    sampled = m[rows][:, cols]
    return LabelGrid.from_class_map(sampled, num_classes=int(m.max()) + 1)


def keypoints_to_labelgrid(
    kp: KeypointSet, height: int, width: int, num_classes: int | None = None
) -> LabelGrid:
    """Place a one-hot 1 at the rounded grid cell of each visible keypoint.

    Coordinates must already be in grid units.  There is no background class;
    cells without a keypoint stay all-zero.  Out-of-grid keypoints are clamped
    to the nearest border cell and reported via a warning.
    """
    if num_classes is None:
        max_id = max((p.class_id for p in kp.points), default=-1)
        num_classes = max(1, max_id + 1)
    scores = np.zeros((num_classes, height, width), dtype=np.float32)
    for p in kp.points:
        if not p.visible:
            continue
        if p.class_id >= num_classes:
            raise ValueError(
                f"keypoint class {p.class_id} exceeds num_classes={num_classes}"
            )
        # halves round up, toward the next cell
        row = int(np.floor(p.y + 0.5))
        col = int(np.floor(p.x + 0.5))
        if not (0 <= row < height and 0 <= col < width):
            warnings.warn(
                f"keypoint class {p.class_id} at ({p.x}, {p.y}) lies outside the "
                f"{height}x{width} grid; clamped to the border",
                stacklevel=2,
            )
            row = min(max(row, 0), height - 1)
            col = min(max(col, 0), width - 1)
        scores[p.class_id, row, col] = 1.0
    return LabelGrid(scores)


def labelgrid_to_keypoints(grid: LabelGrid) -> KeypointSet:
    """Per class, the location of maximum score; all-zero planes are invisible.

    Ties resolve to the lowest raster index.
    """
    points = []
    flat = grid.scores.reshape(grid.classes, -1)
    for class_id in range(grid.classes):
        idx = int(np.argmax(flat[class_id]))
        peak = float(flat[class_id, idx])
        row, col = divmod(idx, grid.width)
        points.append(
            Keypoint(
                class_id=class_id,
                x=float(col),
                y=float(row),
                visible=peak > 0.0,
            )
        )
    return KeypointSet(tuple(points))
