"""Dense brute-force reference for label propagation on small instances.

This is the oracle side of equivalence testing.  Everything is materialized
as full matrices, every column is fully sorted, and masks are built by direct
membership tests.  It shares the data types and the stated numeric
conventions with the production path (affinities and normalized blocks stored
32-bit, accumulation in 64-bit) but none of its kernel code.  Instances are
capped at 64 locations.
"""

from __future__ import annotations

import numpy as np

from labelprop.errors import ConfigError
from labelprop.grids import FeatureGrid, LabelGrid
from labelprop.propagation import FixedRegion, PropagationConfig, Track

__all__ = ["brute_force_propagate", "MAX_LOCATIONS"]

MAX_LOCATIONS = 64


def _normalize_columns(mat: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(mat.astype(np.float64), axis=0, keepdims=True)
    safe = np.where(norms > 0.0, norms, 1.0)
    return (mat.astype(np.float64) / safe).astype(np.float32)


def _affinity32(f32: np.ndarray, g32: np.ndarray) -> np.ndarray:
    return (f32.astype(np.float64).T @ g32.astype(np.float64)).astype(np.float32)


def _softmax_cols32(a32: np.ndarray, temperature: float, allowed=None) -> np.ndarray:
    p, n = a32.shape
    out = np.zeros((p, n), dtype=np.float32)
    for j in range(n):
        rows = np.arange(p) if allowed is None else np.nonzero(allowed[:, j])[0]
        if rows.size == 0:
            continue
        x = a32[rows, j].astype(np.float64) / temperature
        e = np.exp(x - x.max())
        out[rows, j] = (e / e.sum()).astype(np.float32)
    return out


def _top_order(vals32: np.ndarray, k: int) -> np.ndarray:
    # full stable sort: descending value, ascending index on ties
    return np.argsort(-vals32, kind="stable")[: min(k, vals32.size)]


def _fixed_allowed(height: int, width: int, radius: float, metric: str) -> np.ndarray:
    """(N, N) bool: context cell i within radius of target cell j."""
    n = height * width
    hh = np.arange(n) // width
    ww = np.arange(n) % width
    dh = np.abs(hh[:, None] - hh[None, :])
    dw = np.abs(ww[:, None] - ww[None, :])
    if metric == "chebyshev":
        return np.maximum(dh, dw) <= radius
    return dh**2 + dw**2 <= radius * radius


def _track_allowed(context, g32, cfg, height, width) -> np.ndarray:
    """(L, N) bool: target columns where each class may be predicted."""
    n = height * width
    f_ref, y_ref = context[-1]
    n_classes = y_ref.shape[0]
    loc: Track = cfg.localization
    at32 = _affinity32(g32, f_ref)  # rows: target cells, cols: reference cells
    b32 = _softmax_cols32(at32, cfg.temperature)
    coords = np.stack([np.arange(n) // width, np.arange(n) % width], axis=1)
    centers = b32.astype(np.float64).T @ coords.astype(np.float64)  # (N_ref, 2)
    allowed = np.ones((n_classes, n), dtype=bool)
    for class_id in range(1, n_classes):  # background keeps the full frame
        sel = y_ref[class_id] > loc.threshold
        if not bool(sel.any()):
            continue  # class absent: full-frame fallback
        pts = centers[sel]
        r_lo = max(0.0, float(pts[:, 0].min()) - loc.margin)
        r_hi = min(float(height - 1), float(pts[:, 0].max()) + loc.margin)
        c_lo = max(0.0, float(pts[:, 1].min()) - loc.margin)
        c_hi = min(float(width - 1), float(pts[:, 1].max()) + loc.margin)
        rows = coords[:, 0].astype(np.float64)
        cols = coords[:, 1].astype(np.float64)
        allowed[class_id] = (
            (r_lo <= rows) & (rows <= r_hi) & (c_lo <= cols) & (cols <= c_hi)
        )
    return allowed


def _predict_step(context, g32, cfg, height, width) -> np.ndarray:
    n = height * width
    n_classes = context[0][1].shape[0]
    temperature = cfg.temperature

    col_allowed = np.ones((n_classes, n), dtype=bool)
    if isinstance(cfg.localization, Track):
        col_allowed = _track_allowed(context, g32, cfg, height, width)
    row_allowed_single = None
    if isinstance(cfg.localization, FixedRegion):
        row_allowed_single = _fixed_allowed(
            height, width, cfg.localization.radius, cfg.localization.metric
        )

    if cfg.aggregation == "overall":
        frame_feats = [np.concatenate([f for f, _ in context], axis=1)]
        frame_labels = [np.concatenate([y for _, y in context], axis=1)]
    else:
        frame_feats = [f for f, _ in context]
        frame_labels = [y for _, y in context]

    z = np.zeros((n_classes, n), dtype=np.float64)
    for f32, y32 in zip(frame_feats, frame_labels):
        a32 = _affinity32(f32, g32)
        p = a32.shape[0]
        if row_allowed_single is None:
            allowed = np.ones((p, n), dtype=bool)
        elif p == n:
            allowed = row_allowed_single
        else:
            allowed = np.tile(row_allowed_single, (p // n, 1))
        y64 = y32.astype(np.float64)

        if cfg.aggregation == "overall":
            for j in range(n):
                rows = np.nonzero(allowed[:, j])[0]
                if rows.size == 0:
                    continue
                take = rows[_top_order(a32[rows, j], cfg.k)]
                x = a32[take, j].astype(np.float64) / temperature
                e = np.exp(x - x.max())
                weights = e / e.sum()
                for class_id in range(n_classes):
                    if col_allowed[class_id, j]:
                        z[class_id, j] += float(weights @ y64[class_id, take])
        elif cfg.softmax_order == "before_mask":
            b32 = _softmax_cols32(a32, temperature)
            masked = np.where(allowed, b32, np.float32(0.0))
            for j in range(n):
                take = _top_order(masked[:, j], cfg.k)
                weights = masked[take, j].astype(np.float64)
                for class_id in range(n_classes):
                    if col_allowed[class_id, j]:
                        z[class_id, j] += float(weights @ y64[class_id, take])
        else:  # after_mask: excluded rows drop out of the normalization set
            b32 = _softmax_cols32(a32, temperature, allowed=allowed)
            for j in range(n):
                rows = np.nonzero(allowed[:, j])[0]
                if rows.size == 0:
                    continue
                take = rows[_top_order(b32[rows, j], cfg.k)]
                weights = b32[take, j].astype(np.float64)
                for class_id in range(n_classes):
                    if col_allowed[class_id, j]:
                        z[class_id, j] += float(weights @ y64[class_id, take])

    z /= len(frame_feats)
    z[~col_allowed] = 0.0
    return np.clip(z, 0.0, 1.0).astype(np.float32)


def brute_force_propagate(
    features: list[FeatureGrid], init: LabelGrid, cfg: PropagationConfig
) -> list[LabelGrid]:
    """Literal dense transcription of the propagation loop."""
    cfg.validate()
    if not features:
        raise ConfigError("need at least one frame")
    channels, height, width = features[0].values.shape
    n = height * width
    if n > MAX_LOCATIONS:
        raise ValueError(
            f"dense reference refuses N={n} > {MAX_LOCATIONS} locations"
        )
    if (init.height, init.width) != (height, width):
        raise ConfigError("initial labels must match the feature grid")

    feats = []
    for grid in features:
        m = np.asarray(grid.values, dtype=np.float32).reshape(channels, n)
        if cfg.normalize_features and not grid.normalized:
            m = _normalize_columns(m)
        feats.append(m)
    labels0 = np.asarray(init.scores, dtype=np.float32).reshape(init.classes, n)

    outputs = [init]
    anchor = (feats[0], labels0) if cfg.include_first else None
    recent: list[tuple[np.ndarray, np.ndarray]] = []
    if not cfg.include_first:
        recent.append((feats[0], labels0))

    for t in range(1, len(features)):
        window = recent[-cfg.n :] if cfg.n > 0 else []
        context = ([anchor] if anchor is not None else []) + window
        if not context:
            raise ConfigError("empty context")
        z32 = _predict_step(context, feats[t], cfg, height, width)
        outputs.append(LabelGrid(z32.reshape(init.classes, height, width)))
        recent.append((feats[t], z32))
    return outputs
