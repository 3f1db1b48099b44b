"""Frame preprocessing and sequence extraction into the engine's formats.

Tensors are written as NPY (version 1.0, little-endian float32, C order,
shape (C, H, W)); the manifest is the engine's JSON layout with an
``extraction`` block recording how the features were produced, including the
image normalization statistics.  L2 normalization of feature vectors is a
propagation-time choice: the flag is recorded in the manifest, never applied
here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from featextract.backbone import (
    DOWNSAMPLE_FACTOR,
    LAYER_CHANNELS,
    build_backbone,
)

RESOLUTIONS = ("320x320", "480x480", "480xfull")
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
_IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png", ".bmp")
MANIFEST_VERSION = 1


class ExtractionError(ValueError):
    pass


@dataclass(frozen=True)
class ExtractConfig:
    backbone: str = "resnet18-imagenet"
    layer: str = "res3"
    stride_modified: bool = True
    resolution: str = "480xfull"
    upsample: int = 1
    normalize_features: bool = True
    weights: str = "imagenet"
    task: str = "region"

    def __post_init__(self):
        if self.resolution not in RESOLUTIONS:
            raise ExtractionError(
                f"resolution must be one of {RESOLUTIONS}, got {self.resolution!r}"
            )
        if self.upsample not in (1, 2):
            raise ExtractionError(f"upsample factor must be 1 or 2, got {self.upsample}")

    def describe(self) -> dict:
        return {
            "backbone": self.backbone,
            "layer": self.layer,
            "stride_modified": self.stride_modified,
            "resolution": self.resolution,
            "upsample": self.upsample,
            "normalize_features": self.normalize_features,
            "downsample_factor": DOWNSAMPLE_FACTOR,
            "channels": LAYER_CHANNELS[self.layer],
            "normalization_stats": {
                "mean": list(IMAGENET_MEAN),
                "std": list(IMAGENET_STD),
            },
        }


def _network_input_size(original_hw: tuple[int, int], cfg: ExtractConfig):
    h, w = original_hw
    if cfg.resolution == "320x320":
        target = (320, 320)
    elif cfg.resolution == "480x480":
        target = (480, 480)
    else:  # height 480, width scaled to keep the aspect ratio
        target = (480, max(1, round(w * 480 / h)))
    return (target[0] * cfg.upsample, target[1] * cfg.upsample)


def list_frames(frames_dir: Path) -> list[Path]:
    frames = sorted(
        p for p in Path(frames_dir).iterdir()
        if p.suffix.lower() in _IMAGE_SUFFIXES
    )
    if not frames:
        raise ExtractionError(f"no image frames under {frames_dir}")
    return frames


def _load_frame(path: Path, input_hw: tuple[int, int]) -> torch.Tensor:
    try:
        img = Image.open(path).convert("RGB")
    except OSError as exc:
        raise ExtractionError(f"unreadable frame {path}: {exc}") from None
    img = img.resize((input_hw[1], input_hw[0]), Image.BILINEAR)
    arr = np.asarray(img, dtype=np.float32) / 255.0
    arr = (arr - np.asarray(IMAGENET_MEAN, dtype=np.float32)) / np.asarray(
        IMAGENET_STD, dtype=np.float32
    )
    return torch.from_numpy(np.moveaxis(arr, -1, 0)).unsqueeze(0)


def extract_sequence(
    frames_dir,
    out_dir,
    cfg: ExtractConfig,
    model: torch.nn.Module | None = None,
    seq_id: str | None = None,
    annotations_dir=None,
) -> dict:
    """Dump one (C, H, W) tensor per frame; returns the manifest entry."""
    frames_dir = Path(frames_dir)
    out_dir = Path(out_dir)
    frames = list_frames(frames_dir)
    seq_id = seq_id or frames_dir.name
    if model is None:
        model = build_backbone(cfg.layer, cfg.stride_modified, cfg.weights)

    with Image.open(frames[0]) as probe:
        original = (probe.height, probe.width)
    input_hw = _network_input_size(original, cfg)

    feature_dir = out_dir / "features" / seq_id
    feature_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    grid_hw = None
    for index, frame in enumerate(frames):
        batch = _load_frame(frame, input_hw)
        with torch.no_grad():
            feat = model(batch)[0].numpy().astype(np.float32)
        if grid_hw is None:
            grid_hw = feat.shape[1:]
        elif feat.shape[1:] != grid_hw:
            raise ExtractionError(
                f"{frame}: grid {feat.shape[1:]} differs from {grid_hw}"
            )
        feat_path = feature_dir / f"{index:05d}.npy"
        np.save(feat_path, np.ascontiguousarray(feat))
        entry = {"index": index, "feature": feat_path.relative_to(out_dir).as_posix()}
        annotation = _find_annotation(annotations_dir, frame, cfg.task)
        if annotation is not None:
            entry["annotation"] = _relative_or_absolute(annotation, out_dir)
        entries.append(entry)

    return {
        "id": seq_id,
        "resolution": [original[0], original[1]],
        "grid": [int(grid_hw[0]), int(grid_hw[1])],
        "frames": entries,
    }


def _find_annotation(annotations_dir, frame: Path, task: str):
    if annotations_dir is None:
        return None
    suffix = ".txt" if task == "keypoint" else ".png"
    candidate = Path(annotations_dir) / (frame.stem + suffix)
    return candidate if candidate.exists() else None


def _relative_or_absolute(path: Path, root: Path) -> str:
    try:
        return Path(path).resolve().relative_to(root.resolve()).as_posix()
    except ValueError:
        return Path(path).resolve().as_posix()


def write_manifest(sequences: list[dict], cfg: ExtractConfig, out_dir) -> Path:
    out_dir = Path(out_dir)
    data = {
        "format_version": MANIFEST_VERSION,
        "task": cfg.task,
        "annotation_stride": None,
        "sequences": sequences,
        "extraction": cfg.describe(),
    }
    path = out_dir / "manifest.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")
    return path
