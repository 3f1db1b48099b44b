"""Affinity computation, temperature softmax, top-k selection, and soft copy.

The kernels operate column-wise over target locations: each target column is
independent, so callers may partition work over columns freely.  Affinities
are accumulated in 64-bit and stored 32-bit; selection and weighting act on
the stored 32-bit values so results are reproducible across paths.

Row exclusions are passed as an ``allowed_rows(column) -> int array`` provider
(see :class:`labelprop.masking.RegionMask`).  Excluded entries are dropped
from the normalization set before a softmax, and are simply unselectable for
top-k, which reproduces both masking orderings with one representation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from labelprop.errors import ConfigError
from labelprop.grids import FeatureMatrix, LabelMatrix

__all__ = [
    "AffinityBlock",
    "TopKSelection",
    "compute_affinity",
    "column_softmax",
    "concat_context",
    "topk_select",
    "softmax_over_topk",
    "soft_copy",
]


@dataclass(frozen=True)
class AffinityBlock:
    """A (P, N) block of affinities from P context rows to N target columns."""

    values: np.ndarray
    column_normalized: bool = False
    # columns whose normalization set was fully excluded (all-zero output)
    zero_columns: np.ndarray | None = None

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float32)
        if arr.ndim != 2:
            raise ValueError(f"affinity block must be (P, N), got shape {arr.shape}")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        if self.zero_columns is not None:
            zc = np.asarray(self.zero_columns, dtype=bool)
            if zc.shape != (arr.shape[1],):
                raise ValueError("zero_columns must have one flag per column")
            zc.setflags(write=False)
            object.__setattr__(self, "zero_columns", zc)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class TopKSelection:
    """Per target column, up to k selected context rows and their weights.

    Rows beyond ``effective_k[j]`` are padding with weight 0 (index 0).
    Within a column, entries are ordered by descending affinity, ties by
    ascending row index.
    """

    indices: np.ndarray  # (k, N) int64
    weights: np.ndarray  # (k, N) float64
    effective_k: np.ndarray  # (N,) int64
    softmaxed: bool = False

    def __post_init__(self):
        idx = np.ascontiguousarray(np.asarray(self.indices, dtype=np.int64))
        wts = np.ascontiguousarray(np.asarray(self.weights, dtype=np.float64))
        eff = np.ascontiguousarray(np.asarray(self.effective_k, dtype=np.int64))
        if idx.ndim != 2 or wts.shape != idx.shape:
            raise ValueError("indices and weights must both be (k, N)")
        if eff.shape != (idx.shape[1],):
            raise ValueError("effective_k must have one entry per column")
        for a in (idx, wts, eff):
            a.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "weights", wts)
        object.__setattr__(self, "effective_k", eff)

    @property
    def k(self) -> int:
        return self.indices.shape[0]

    @property
    def cols(self) -> int:
        return self.indices.shape[1]


def compute_affinity(f: FeatureMatrix, g: FeatureMatrix) -> AffinityBlock:
    """Raw dot-product affinities: A[i, j] = f column i . g column j."""
    if f.channels != g.channels:
        raise ConfigError(
            f"channel mismatch: context C={f.channels} vs target C={g.channels}"
        )
    a = f.values.astype(np.float64).T @ g.values.astype(np.float64)
    return AffinityBlock(a.astype(np.float32))


def concat_context(
    features: list[FeatureMatrix], labels: list[LabelMatrix]
) -> tuple[FeatureMatrix, LabelMatrix]:
    """Concatenate context frames column-wise, first frame first."""
    if not features or len(features) != len(labels):
        raise ConfigError("need equal, nonempty feature and label lists")
    f0, y0 = features[0], labels[0]
    for f, y in zip(features, labels):
        if (f.channels, f.locations) != (f0.channels, f0.locations):
            raise ConfigError("context frames must share feature shape")
        if (y.classes, y.locations) != (y0.classes, y0.locations):
            raise ConfigError("context frames must share label shape")
        if y.locations != f.locations:
            raise ConfigError("feature and label location counts differ")
    if len(features) == 1:
        return f0, y0
    n = len(features)
    fcat = np.concatenate([f.values for f in features], axis=1)
    ycat = np.concatenate([y.scores for y in labels], axis=1)
    # block layout: treat the concatenation as an (n*H) x W grid of columns
    return (
        FeatureMatrix(fcat, height=f0.height * n, width=f0.width,
                      normalized=all(f.normalized for f in features)),
        LabelMatrix(ycat, height=y0.height * n, width=y0.width),
    )


def _softmax_1d(vals: np.ndarray, temperature: float) -> np.ndarray:
    x = vals.astype(np.float64) / temperature
    e = np.exp(x - x.max())
    return e / e.sum()


def column_softmax(
    block: AffinityBlock, temperature: float, exclusions=None
) -> AffinityBlock:
    """Per-column softmax of A/T over the non-excluded rows.

    Excluded rows come out exactly 0.  Columns whose allowed set is empty come
    out all-zero and are flagged in ``zero_columns``.
    """
    if temperature <= 0.0:
        raise ConfigError(f"temperature must be > 0, got {temperature}")
    if block.column_normalized:
        raise ConfigError("affinity block is already column-normalized")
    a = block.values
    if exclusions is None:
        x = a.astype(np.float64) / temperature
        x -= x.max(axis=0, keepdims=True)
        e = np.exp(x)
        out = e / e.sum(axis=0, keepdims=True)
        zero = np.zeros(a.shape[1], dtype=bool)
        return AffinityBlock(
            out.astype(np.float32), column_normalized=True, zero_columns=zero
        )
    p, n = a.shape
    out = np.zeros((p, n), dtype=np.float32)
    zero = np.zeros(n, dtype=bool)
    for j in range(n):
        rows = exclusions.allowed_rows(j)
        if rows.size == 0:
            zero[j] = True
            continue
        out[rows, j] = _softmax_1d(a[rows, j], temperature).astype(np.float32)
    return AffinityBlock(out, column_normalized=True, zero_columns=zero)


def topk_select(block: AffinityBlock, k: int, exclusions=None) -> TopKSelection:
    """Per column, the k largest non-excluded entries.

    Ties break toward the lower row index.  When exclusions leave fewer than
    k candidates, selection clamps and ``effective_k`` records the count.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    a = block.values
    p, n = a.shape
    if exclusions is None:
        kk = min(k, p)
        # stable sort on -values: descending value, ascending index on ties
        order = np.argsort(-a, axis=0, kind="stable")[:kk]
        vals = np.take_along_axis(a, order, axis=0)
        indices = np.zeros((k, n), dtype=np.int64)
        weights = np.zeros((k, n), dtype=np.float64)
        indices[:kk] = order
        weights[:kk] = vals
        eff = np.full(n, kk, dtype=np.int64)
        return TopKSelection(indices, weights, eff, softmaxed=block.column_normalized)
    indices = np.zeros((k, n), dtype=np.int64)
    weights = np.zeros((k, n), dtype=np.float64)
    eff = np.zeros(n, dtype=np.int64)
    for j in range(n):
        rows = exclusions.allowed_rows(j)
        if rows.size == 0:
            continue
        vals = a[rows, j]
        kk = min(k, rows.size)
        order = np.argsort(-vals, kind="stable")[:kk]
        indices[:kk, j] = rows[order]
        weights[:kk, j] = vals[order]
        eff[j] = kk
    return TopKSelection(indices, weights, eff, softmaxed=block.column_normalized)


def softmax_over_topk(sel: TopKSelection, temperature: float) -> TopKSelection:
    """Softmax of the selected raw affinities, per column."""
    if temperature <= 0.0:
        raise ConfigError(f"temperature must be > 0, got {temperature}")
    if sel.softmaxed:
        raise ConfigError("selection weights are already normalized")
    weights = np.zeros_like(sel.weights)
    for j in range(sel.cols):
        kk = int(sel.effective_k[j])
        if kk == 0:
            continue
        weights[:kk, j] = _softmax_1d(sel.weights[:kk, j], temperature)
    return TopKSelection(sel.indices, weights, sel.effective_k, softmaxed=True)


def soft_copy(
    sel: TopKSelection,
    labels: LabelMatrix,
    height: int | None = None,
    width: int | None = None,
) -> LabelMatrix:
    """Weighted sum of context label columns at the selected rows.

    ``height``/``width`` give the target grid dims; they default to the label
    dims, which is only valid when context and target grids coincide.  Output
    is clipped to [0, 1]; with sub-distribution weights the clip only absorbs
    rounding.
    """
    if height is None or width is None:
        height, width = labels.height, labels.width
    if sel.cols != height * width:
        raise ConfigError(
            f"selection covers {sel.cols} target columns, grid has {height * width}"
        )
    gathered = labels.scores[:, sel.indices].astype(np.float64)  # (L, k, N)
    z = np.einsum("lkn,kn->ln", gathered, sel.weights)
    z = np.clip(z, 0.0, 1.0).astype(np.float32)
    return LabelMatrix(z, height=height, width=width)
