"""Spatial context localization expressed as affinity exclusions.

Two mechanisms are provided: a fixed-region mask that restricts the context
rows each target cell may copy from (radius window, chebyshev or euclidean),
and per-class track boxes that restrict the target columns a class may be
predicted at, built from affinity-weighted coordinate prediction.

Region masks are factored: the allowed row set is generated per target
column, never materialized as a full P x N boolean matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from labelprop.affinity import AffinityBlock
from labelprop.errors import ConfigError
from labelprop.grids import LabelMatrix

__all__ = [
    "RegionMask",
    "TrackBox",
    "fixed_region_mask",
    "grid_coordinates",
    "predict_coordinates",
    "estimate_track_box",
    "boxes_to_exclusions",
]

_METRICS = ("chebyshev", "euclidean")


@dataclass(frozen=True)
class RegionMask:
    """Allowed-row provider: context cells within ``radius`` of each target cell.

    The allowed set for target cell (h, w) is replicated across all ``frames``
    context frames, offset by frame * H * W.
    """

    height: int
    width: int
    radius: float
    metric: str = "chebyshev"
    frames: int = 1

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ConfigError("grid dims must be >= 1")
        if self.radius < 0.0:
            raise ConfigError(f"radius must be >= 0, got {self.radius}")
        if self.metric not in _METRICS:
            raise ConfigError(f"metric must be one of {_METRICS}, got {self.metric!r}")
        if self.frames < 1:
            raise ConfigError("frames must be >= 1")

    @property
    def locations(self) -> int:
        return self.height * self.width

    @property
    def rows(self) -> int:
        return self.frames * self.locations

    @property
    def saturated(self) -> bool:
        """True when every context cell is within radius of every target cell."""
        if self.metric == "chebyshev":
            reach = max(self.height - 1, self.width - 1)
        else:
            reach = float(np.hypot(self.height - 1, self.width - 1))
        return self.radius >= reach

    def allowed_cells(self, h: int, w: int) -> np.ndarray:
        """Single-frame cell indices within radius of (h, w), ascending."""
        r = self.radius
        h0 = max(0, int(np.ceil(h - r)))
        h1 = min(self.height - 1, int(np.floor(h + r)))
        w0 = max(0, int(np.ceil(w - r)))
        w1 = min(self.width - 1, int(np.floor(w + r)))
        if h1 < h0 or w1 < w0:
            return np.empty(0, dtype=np.int64)
        hh = np.arange(h0, h1 + 1, dtype=np.int64)
        ww = np.arange(w0, w1 + 1, dtype=np.int64)
        if self.metric == "euclidean":
            dh2 = (hh - h)[:, None] ** 2
            dw2 = (ww - w)[None, :] ** 2
            keep = (dh2 + dw2) <= r * r
            cells = (hh[:, None] * self.width + ww[None, :])[keep]
            return cells
        return (hh[:, None] * self.width + ww[None, :]).reshape(-1)

    def allowed_rows(self, column: int) -> np.ndarray:
        """Allowed row indices for one target column, across all frames."""
        if self.saturated:
            return np.arange(self.rows, dtype=np.int64)
        h, w = divmod(int(column), self.width)
        cells = self.allowed_cells(h, w)
        if self.frames == 1:
            return cells
        offsets = np.arange(self.frames, dtype=np.int64) * self.locations
        return (offsets[:, None] + cells[None, :]).reshape(-1)


def fixed_region_mask(
    height: int, width: int, radius: float, metric: str = "chebyshev", frames: int = 1
) -> RegionMask:
    """Build the fixed-region exclusion mask."""
    return RegionMask(height=height, width=width, radius=radius, metric=metric,
                      frames=frames)


@dataclass(frozen=True)
class TrackBox:
    """Axis-aligned per-class target box in grid coordinates (row, col)."""

    class_id: int
    row_lo: float
    row_hi: float
    col_lo: float
    col_hi: float
    valid: bool = True

    def contains(self, row: float, col: float) -> bool:
        return (
            self.row_lo <= row <= self.row_hi and self.col_lo <= col <= self.col_hi
        )


def grid_coordinates(height: int, width: int, frames: int = 1) -> np.ndarray:
    """(rows, 2) array of (row, col) coordinates in raster order."""
    hh, ww = np.indices((height, width))
    coords = np.stack([hh.reshape(-1), ww.reshape(-1)], axis=1).astype(np.float64)
    if frames > 1:
        coords = np.tile(coords, (frames, 1))
    return coords


def predict_coordinates(
    block: AffinityBlock, coords: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Affinity-weighted mean of row coordinates, per target column.

    Returns (centers, valid): centers is (N, 2) of (row, col); columns flagged
    all-zero in the block are invalid and get (0, 0).
    """
    if not block.column_normalized:
        raise ConfigError("coordinate prediction needs a column-normalized block")
    coords = np.asarray(coords, dtype=np.float64)
    if coords.shape != (block.rows, 2):
        raise ConfigError(
            f"coords must be ({block.rows}, 2), got {coords.shape}"
        )
    centers = block.values.astype(np.float64).T @ coords
    if block.zero_columns is not None:
        valid = ~block.zero_columns
    else:
        valid = block.values.sum(axis=0) > 0.0
    centers[~valid] = 0.0
    return centers, valid


def estimate_track_box(
    block: AffinityBlock,
    prev: LabelMatrix,
    coords: np.ndarray,
    height: int,
    width: int,
    threshold: float = 0.5,
    margin: float = 2.0,
) -> list[TrackBox]:
    """Per-class boxes from predicted coordinates of the labeled cells.

    ``block`` must be column-normalized with one context frame: rows are
    target-frame locations carrying ``coords``, columns are previous-frame
    locations aligned with ``prev``.  For each class, cells scoring above the
    threshold map through coordinate prediction; their bounding box, expanded
    by the margin and clamped to the grid, restricts where the class may be
    predicted.  Class 0 (background) and classes absent from ``prev`` get the
    full frame.
    """
    if block.cols != prev.locations:
        raise ConfigError("affinity columns must align with previous-frame labels")
    centers, valid = predict_coordinates(block, coords)
    full = dict(row_lo=0.0, row_hi=float(height - 1),
                col_lo=0.0, col_hi=float(width - 1))
    boxes = []
    for class_id in range(prev.classes):
        if class_id == 0:
            boxes.append(TrackBox(class_id, **full, valid=True))
            continue
        mask = (prev.scores[class_id] > threshold) & valid
        if not bool(mask.any()):
            boxes.append(TrackBox(class_id, **full, valid=False))
            continue
        pts = centers[mask]
        boxes.append(
            TrackBox(
                class_id,
                row_lo=max(0.0, float(pts[:, 0].min()) - margin),
                row_hi=min(float(height - 1), float(pts[:, 0].max()) + margin),
                col_lo=max(0.0, float(pts[:, 1].min()) - margin),
                col_hi=min(float(width - 1), float(pts[:, 1].max()) + margin),
                valid=True,
            )
        )
    return boxes


def boxes_to_exclusions(
    boxes: list[TrackBox], height: int, width: int
) -> np.ndarray:
    """(L, N) boolean matrix: True where a class is excluded at a target cell."""
    n = height * width
    excluded = np.zeros((len(boxes), n), dtype=bool)
    rows = np.arange(n, dtype=np.int64) // width
    cols = np.arange(n, dtype=np.int64) % width
    for i, box in enumerate(boxes):
        inside = (
            (box.row_lo <= rows)
            & (rows <= box.row_hi)
            & (box.col_lo <= cols)
            & (cols <= box.col_hi)
        )
        excluded[i] = ~inside
    return excluded
