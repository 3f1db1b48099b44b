"""Video-level label propagation: context buffering, masking, soft copy.

A step predicts the target frame's soft labels from a context of earlier
frames.  Two aggregations are supported: "overall" computes one affinity over
the concatenated context, selects top-k, and normalizes the selected values;
"per_frame" normalizes each frame's full affinity columns, selects top-k per
frame, and averages the per-frame predictions.  With per-frame aggregation
the softmax may run before masking (masked entries zeroed afterwards) or
after it (masked entries dropped from the normalization set).

Predicted soft labels are re-enqueued as context; they are never re-argmaxed.
Frames within a video are sequentially dependent; distinct videos are
independent and may run in parallel.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from labelprop.affinity import (
    column_softmax,
    compute_affinity,
    concat_context,
    soft_copy,
    softmax_over_topk,
    topk_select,
)
from labelprop.errors import ConfigError
from labelprop.grids import (
    FeatureGrid,
    FeatureMatrix,
    LabelGrid,
    LabelMatrix,
    flatten,
    flatten_labels,
    l2_normalize,
    unflatten_labels,
)
from labelprop.masking import (
    RegionMask,
    boxes_to_exclusions,
    estimate_track_box,
    grid_coordinates,
)

__all__ = [
    "FixedRegion",
    "Track",
    "PropagationConfig",
    "ContextBuffer",
    "propagate_step",
    "propagate_video",
    "label_mass_trace",
]

AGGREGATIONS = ("per_frame", "overall")
SOFTMAX_ORDERS = ("before_mask", "after_mask")


@dataclass(frozen=True)
class FixedRegion:
    """Restrict context rows to a radius around each target cell."""

    radius: float
    metric: str = "chebyshev"


@dataclass(frozen=True)
class Track:
    """Restrict target columns per class to an affinity-predicted box."""

    threshold: float = 0.5
    margin: float = 2.0


Localization = Union[FixedRegion, Track, None]


@dataclass(frozen=True)
class PropagationConfig:
    aggregation: str = "per_frame"
    temperature: float = 1.0
    k: int = 5
    n: int = 7
    include_first: bool = True
    localization: Localization = None
    softmax_order: str = "before_mask"
    normalize_features: bool = True

    def validate(self) -> None:
        if self.aggregation not in AGGREGATIONS:
            raise ConfigError(
                f"aggregation must be one of {AGGREGATIONS}, got {self.aggregation!r}"
            )
        if self.softmax_order not in SOFTMAX_ORDERS:
            raise ConfigError(
                f"softmax_order must be one of {SOFTMAX_ORDERS}, "
                f"got {self.softmax_order!r}"
            )
        if self.temperature <= 0.0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.n < 0:
            raise ConfigError(f"n must be >= 0, got {self.n}")
        if not self.include_first and self.n == 0:
            raise ConfigError("n=0 requires include_first=True (empty context)")
        if isinstance(self.localization, Track):
            if self.aggregation != "per_frame":
                raise ConfigError("track requires aggregation = per_frame")
            if self.softmax_order != "before_mask":
                raise ConfigError("track requires softmax_order = before_mask")
        if isinstance(self.localization, FixedRegion):
            if self.localization.radius < 0.0:
                raise ConfigError("fixed-region radius must be >= 0")

    def to_dict(self) -> dict:
        loc: dict | None
        if isinstance(self.localization, FixedRegion):
            loc = {
                "kind": "fixed_region",
                "radius": self.localization.radius,
                "metric": self.localization.metric,
            }
        elif isinstance(self.localization, Track):
            loc = {
                "kind": "track",
                "threshold": self.localization.threshold,
                "margin": self.localization.margin,
            }
        else:
            loc = {"kind": "none"}
        return {
            "aggregation": self.aggregation,
            "temperature": self.temperature,
            "k": self.k,
            "n": self.n,
            "include_first": self.include_first,
            "localization": loc,
            "softmax_order": self.softmax_order,
            "normalize_features": self.normalize_features,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PropagationConfig":
        data = dict(data)
        if "inverse_temperature" in data:
            if "temperature" in data:
                raise ConfigError(
                    "give either temperature or inverse_temperature, not both"
                )
            inv = float(data.pop("inverse_temperature"))
            if inv <= 0.0:
                raise ConfigError("inverse_temperature must be > 0")
            data["temperature"] = 1.0 / inv
        loc_data = data.pop("localization", None)
        loc: Localization = None
        if loc_data is not None:
            if isinstance(loc_data, str):
                loc_data = {"kind": loc_data}
            kind = loc_data.get("kind", "none")
            if kind == "none":
                loc = None
            elif kind == "fixed_region":
                loc = FixedRegion(
                    radius=float(loc_data["radius"]),
                    metric=loc_data.get("metric", "chebyshev"),
                )
            elif kind == "track":
                loc = Track(
                    threshold=float(loc_data.get("threshold", 0.5)),
                    margin=float(loc_data.get("margin", 2.0)),
                )
            else:
                raise ConfigError(f"unknown localization kind {kind!r}")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        cfg = cls(localization=loc, **data)
        cfg.validate()
        return cfg


class ContextBuffer:
    """Anchor frame plus a rolling window of the n most recent frames."""

    def __init__(self, capacity: int, anchor=None):
        if capacity < 0:
            raise ConfigError("capacity must be >= 0")
        self.anchor: Optional[tuple[FeatureMatrix, LabelMatrix]] = anchor
        self.recent: deque = deque(maxlen=capacity) if capacity > 0 else deque(maxlen=0)

    def push(self, features: FeatureMatrix, labels: LabelMatrix) -> None:
        if self.recent.maxlen:
            self.recent.append((features, labels))

    def entries(self) -> list[tuple[FeatureMatrix, LabelMatrix]]:
        """Context frames in order, first (oldest) frame first."""
        out = []
        if self.anchor is not None:
            out.append(self.anchor)
        out.extend(self.recent)
        return out

    def __len__(self) -> int:
        return (1 if self.anchor is not None else 0) + len(self.recent)


def _check_step_shapes(entries, g: FeatureMatrix) -> None:
    for f, y in entries:
        if f.channels != g.channels:
            raise ConfigError("context and target channel counts differ")
        if f.locations != g.locations or y.locations != g.locations:
            raise ConfigError("context and target location counts differ")
        if (f.height, f.width) != (g.height, g.width):
            raise ConfigError("context and target grid dims differ")


def _track_exclusions(entries, g, cfg) -> np.ndarray:
    # boxes come from the most recent context frame and apply to every
    # context frame of this step
    f_ref, y_ref = entries[-1]
    block = column_softmax(compute_affinity(g, f_ref), cfg.temperature)
    coords = grid_coordinates(g.height, g.width)
    boxes = estimate_track_box(
        block,
        y_ref,
        coords,
        g.height,
        g.width,
        threshold=cfg.localization.threshold,
        margin=cfg.localization.margin,
    )
    return boxes_to_exclusions(boxes, g.height, g.width)


def propagate_step(
    ctx: ContextBuffer, g: FeatureMatrix, cfg: PropagationConfig
) -> LabelMatrix:
    """Predict the target frame's soft labels from the context buffer."""
    cfg.validate()
    entries = ctx.entries()
    if not entries:
        raise ConfigError("context buffer is empty")
    _check_step_shapes(entries, g)
    n_frames = len(entries)
    height, width = g.height, g.width

    region = None
    if isinstance(cfg.localization, FixedRegion):
        region = RegionMask(
            height=height,
            width=width,
            radius=cfg.localization.radius,
            metric=cfg.localization.metric,
            frames=n_frames if cfg.aggregation == "overall" else 1,
        )
        if region.saturated:
            region = None

    excluded_cols = None
    if isinstance(cfg.localization, Track):
        excluded_cols = _track_exclusions(entries, g, cfg)

    if cfg.aggregation == "overall":
        fcat, ycat = concat_context([f for f, _ in entries], [y for _, y in entries])
        block = compute_affinity(fcat, g)
        sel = topk_select(block, cfg.k, exclusions=region)
        sel = softmax_over_topk(sel, cfg.temperature)
        z = soft_copy(sel, ycat, height, width).scores.astype(np.float64)
    else:
        acc = np.zeros((entries[0][1].classes, g.locations), dtype=np.float64)
        for f, y in entries:
            block = compute_affinity(f, g)
            if cfg.softmax_order == "after_mask" and region is not None:
                norm = column_softmax(block, cfg.temperature, exclusions=region)
            else:
                norm = column_softmax(block, cfg.temperature)
            sel = topk_select(norm, cfg.k, exclusions=region)
            acc += soft_copy(sel, y).scores
        z = acc / n_frames

    if excluded_cols is not None:
        z[excluded_cols] = 0.0
    z = np.clip(z, 0.0, 1.0).astype(np.float32)
    return LabelMatrix(z, height=height, width=width)


def propagate_video(
    features: list[FeatureGrid], init: LabelGrid, cfg: PropagationConfig
) -> list[LabelGrid]:
    """Propagate the initial labels through the whole video.

    Frame 0's output is the initial grid itself.  Later frames are predicted
    from the anchor (when enabled) plus the last n predictions; each predicted
    soft label matrix is re-enqueued.  The initial frame enters the rolling
    window only when the anchor is disabled, so it is never counted twice.
    """
    cfg.validate()
    if not features:
        raise ConfigError("need at least one frame")
    g0 = features[0]
    if (init.height, init.width) != (g0.height, g0.width):
        raise ConfigError(
            "initial labels must be at feature-grid resolution "
            f"({g0.height}x{g0.width}), got {init.height}x{init.width}"
        )
    for f in features:
        if (f.channels, f.height, f.width) != (g0.channels, g0.height, g0.width):
            raise ConfigError("all frames must share feature dimensions")

    mats = [flatten(f) for f in features]
    if cfg.normalize_features:
        mats = [m if m.normalized else l2_normalize(m) for m in mats]
    y0 = flatten_labels(init)

    buffer = ContextBuffer(
        capacity=cfg.n,
        anchor=(mats[0], y0) if cfg.include_first else None,
    )
    if not cfg.include_first:
        buffer.push(mats[0], y0)

    outputs = [init]
    for t in range(1, len(features)):
        z = propagate_step(buffer, mats[t], cfg)
        outputs.append(unflatten_labels(z))
        buffer.push(mats[t], z)
    return outputs


def label_mass_trace(outputs: list[LabelGrid]) -> np.ndarray:
    """Per frame, the mean over locations of the summed class scores."""
    if not outputs:
        raise ConfigError("need at least one output grid")
    return np.array(
        [float(g.scores.astype(np.float64).sum(axis=0).mean()) for g in outputs]
    )
