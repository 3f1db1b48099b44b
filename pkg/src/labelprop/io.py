"""Bit-exact file formats: NPY tensors, indexed PNG masks, keypoint files,
manifests, and CSV reports.

Formats
-------
* Feature tensors: NPY containers (version 1.0 or 2.0), little-endian 32- or
  64-bit floats, shape (C, H, W); 64-bit data is downcast to 32-bit on read.
  The parser works directly from the byte layout.
* Masks: 8-bit palette-indexed PNG where the pixel value is the class id.
* Keypoints: one text file per frame.  First line ``labelprop-keypoints v1``,
  then one ``class x y visible`` line per keypoint; ``#`` starts a comment.
* Reports: CSV with columns ``sequence,object,J,F`` plus a final aggregate
  row ``mean,all,J_M,F_M``.  Semantic reports use ``sequence,mIoU``; keypoint
  reports ``sequence,PCK@<alpha>...``.  Sweep CSVs carry the configuration
  columns ``T,k,n,aggregation,localization`` followed by metric columns.
* Manifests: JSON with a ``format_version`` field listing sequences and
  frames; array order is authoritative, so loading never depends on
  filesystem enumeration order.
"""

from __future__ import annotations

import ast
import csv
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from labelprop.errors import FormatError
from labelprop.grids import FeatureGrid, Keypoint, KeypointSet
from labelprop.metrics import MetricsReport

__all__ = [
    "FrameEntry",
    "SequenceEntry",
    "SequenceManifest",
    "read_tensor",
    "write_tensor",
    "read_tensor_array",
    "write_tensor_array",
    "read_mask",
    "write_mask",
    "default_palette",
    "read_keypoints",
    "write_keypoints",
    "load_manifest",
    "save_manifest",
    "write_report",
    "write_semantic_report",
    "write_keypoint_report",
    "write_sweep_csv",
    "write_trace_csv",
    "SWEEP_COLUMNS",
]

MANIFEST_VERSION = 1
TASK_KINDS = ("region", "semantic", "keypoint")
_MAGIC = b"\x93NUMPY"
_DESCRS = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}
_KEYPOINT_HEADER = "labelprop-keypoints v1"
SWEEP_COLUMNS = (
    "T", "k", "n", "aggregation", "localization",
    "J_M", "J_O", "F_M", "F_O", "JF_M", "mIoU", "error",
)


# ---------------------------------------------------------------------------
# NPY tensors
# ---------------------------------------------------------------------------

def read_tensor_array(path) -> np.ndarray:
    """Parse an NPY file into a (C, H, W) float32 array."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 10 or data[:6] != _MAGIC:
        raise FormatError(path, "magic", "not an NPY container")
    major, minor = data[6], data[7]
    if major == 1:
        (header_len,) = struct.unpack_from("<H", data, 8)
        header_start = 10
    elif major == 2:
        if len(data) < 12:
            raise FormatError(path, "header", "truncated header length")
        (header_len,) = struct.unpack_from("<I", data, 8)
        header_start = 12
    else:
        raise FormatError(path, "version", f"unsupported version {major}.{minor}")
    header_end = header_start + header_len
    if len(data) < header_end:
        raise FormatError(path, "header", "truncated header")
    try:
        header = ast.literal_eval(data[header_start:header_end].decode("latin-1"))
    except (ValueError, SyntaxError) as exc:
        raise FormatError(path, "header", f"unparseable header map: {exc}") from None
    if not isinstance(header, dict):
        raise FormatError(path, "header", "header is not a map")
    for key in ("descr", "fortran_order", "shape"):
        if key not in header:
            raise FormatError(path, "header", f"missing {key!r}")
    descr = header["descr"]
    if descr not in _DESCRS:
        raise FormatError(
            path, "descr", f"unsupported dtype {descr!r} (need <f4 or <f8)"
        )
    shape = tuple(header["shape"])
    if len(shape) != 3:
        raise FormatError(path, "shape", f"need rank 3 (C, H, W), got {shape}")
    if any(int(s) < 1 for s in shape):
        raise FormatError(path, "shape", f"dims must be >= 1, got {shape}")
    fortran = header["fortran_order"]
    if not isinstance(fortran, bool):
        raise FormatError(path, "fortran_order", f"expected bool, got {fortran!r}")
    dtype = _DESCRS[descr]
    count = int(np.prod(shape))
    payload = data[header_end:]
    if len(payload) < count * dtype.itemsize:
        raise FormatError(path, "data", "payload shorter than the declared shape")
    arr = np.frombuffer(payload, dtype=dtype, count=count)
    arr = arr.reshape(shape, order="F" if fortran else "C")
    return np.ascontiguousarray(arr, dtype=np.float32)


def read_tensor(path) -> FeatureGrid:
    return FeatureGrid(read_tensor_array(path))


def _npy_header_bytes(shape: tuple[int, ...]) -> bytes:
    dims = ", ".join(str(int(s)) for s in shape)
    if len(shape) == 1:
        dims += ","
    header = f"{{'descr': '<f4', 'fortran_order': False, 'shape': ({dims}), }}"
    prefix_len = len(_MAGIC) + 2 + 2
    total = prefix_len + len(header) + 1
    pad = (64 - total % 64) % 64
    header = header + " " * pad + "\n"
    return _MAGIC + bytes([1, 0]) + struct.pack("<H", len(header)) + header.encode(
        "latin-1"
    )


def write_tensor_array(values: np.ndarray, path) -> None:
    """Write a rank-3 float array as a version 1.0 NPY file (float32)."""
    arr = np.ascontiguousarray(values, dtype=np.float32)
    if arr.ndim != 3:
        raise ValueError(f"tensor must be rank 3, got shape {arr.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_npy_header_bytes(arr.shape))
        fh.write(arr.tobytes(order="C"))


def write_tensor(grid: FeatureGrid, path) -> None:
    write_tensor_array(grid.values, path)


# ---------------------------------------------------------------------------
# Indexed PNG masks
# ---------------------------------------------------------------------------

def default_palette(num_colors: int = 256) -> list[tuple[int, int, int]]:
    """Bit-interleaved palette (VOC/DAVIS convention): index = class id."""
    palette = []
    for idx in range(num_colors):
        r = g = b = 0
        c = idx
        for shift in range(8):
            r |= ((c >> 0) & 1) << (7 - shift)
            g |= ((c >> 1) & 1) << (7 - shift)
            b |= ((c >> 2) & 1) << (7 - shift)
            c >>= 3
        palette.append((r, g, b))
    return palette


def write_mask(class_map, path, palette=None) -> None:
    """Write an integer class map as an 8-bit palette-indexed PNG."""
    m = np.asarray(class_map)
    if m.ndim != 2:
        raise ValueError(f"class map must be 2-D, got shape {m.shape}")
    if m.min() < 0 or m.max() > 255:
        raise ValueError("class ids must fit 8-bit palette indices [0, 255]")
    img = Image.fromarray(m.astype(np.uint8), mode="P")
    pal = palette if palette is not None else default_palette()
    img.putpalette([v for rgb in pal for v in rgb])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    img.save(path, format="PNG")


def read_mask(path) -> np.ndarray:
    """Read an indexed (or 8-bit grayscale) PNG as an integer class map."""
    path = Path(path)
    try:
        img = Image.open(path)
        img.load()
    except (OSError, SyntaxError) as exc:
        raise FormatError(path, "png", str(exc)) from None
    if img.mode not in ("P", "L"):
        raise FormatError(
            path, "mode", f"expected palette-indexed (P) or L, got {img.mode}"
        )
    return np.asarray(img, dtype=np.int64)


# ---------------------------------------------------------------------------
# Keypoint files
# ---------------------------------------------------------------------------

def write_keypoints(kp: KeypointSet, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [_KEYPOINT_HEADER]
    lines += [
        f"{p.class_id} {p.x:.6f} {p.y:.6f} {1 if p.visible else 0}"
        for p in kp.points
    ]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_keypoints(path) -> KeypointSet:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != _KEYPOINT_HEADER:
        raise FormatError(path, "header", f"expected {_KEYPOINT_HEADER!r}")
    points = []
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise FormatError(
                path, "line", f"line {lineno}: expected 'class x y visible'"
            )
        try:
            class_id = int(parts[0])
            x, y = float(parts[1]), float(parts[2])
            visible = bool(int(parts[3]))
        except ValueError as exc:
            raise FormatError(path, "line", f"line {lineno}: {exc}") from None
        points.append(Keypoint(class_id=class_id, x=x, y=y, visible=visible))
    try:
        return KeypointSet(tuple(points))
    except ValueError as exc:
        raise FormatError(path, "points", str(exc)) from None


# ---------------------------------------------------------------------------
# Manifests
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FrameEntry:
    index: int
    feature: Path
    annotation: Path | None = None


@dataclass(frozen=True)
class SequenceEntry:
    sequence_id: str
    resolution: tuple[int, int]  # (H_px, W_px)
    frames: tuple[FrameEntry, ...]

    @property
    def annotated(self) -> tuple[FrameEntry, ...]:
        return tuple(f for f in self.frames if f.annotation is not None)


@dataclass(frozen=True)
class SequenceManifest:
    task: str
    sequences: tuple[SequenceEntry, ...]
    annotation_stride: int | None = None
    extra: dict | None = None


def load_manifest(path, check_paths: bool = True) -> SequenceManifest:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(path, "json", str(exc)) from None
    version = data.get("format_version")
    if version != MANIFEST_VERSION:
        raise FormatError(
            path, "format_version", f"expected {MANIFEST_VERSION}, got {version!r}"
        )
    task = data.get("task", "region")
    if task not in TASK_KINDS:
        raise FormatError(path, "task", f"expected one of {TASK_KINDS}, got {task!r}")
    root = path.parent
    sequences = []
    for seq in data.get("sequences", []):
        seq_id = seq.get("id")
        if not seq_id:
            raise FormatError(path, "sequences", "sequence without an id")
        resolution = tuple(int(v) for v in seq.get("resolution", ()))
        if len(resolution) != 2 or min(resolution) < 1:
            raise FormatError(
                path, "resolution", f"sequence {seq_id}: need [H_px, W_px]"
            )
        frames = []
        prev_index = None
        for frame in seq.get("frames", []):
            index = int(frame["index"])
            if prev_index is not None and index <= prev_index:
                raise FormatError(
                    path, "frames",
                    f"sequence {seq_id}: indices must strictly increase",
                )
            prev_index = index
            feature = root / frame["feature"]
            annotation = frame.get("annotation")
            annotation = root / annotation if annotation else None
            if check_paths:
                if not feature.exists():
                    raise FormatError(
                        path, "feature", f"sequence {seq_id}: missing {feature}"
                    )
                if annotation is not None and not annotation.exists():
                    raise FormatError(
                        path, "annotation", f"sequence {seq_id}: missing {annotation}"
                    )
            frames.append(
                FrameEntry(index=index, feature=feature, annotation=annotation)
            )
        if not frames:
            raise FormatError(path, "frames", f"sequence {seq_id}: no frames")
        if frames[0].annotation is None:
            raise FormatError(
                path, "annotation",
                f"sequence {seq_id}: first frame must carry an annotation",
            )
        sequences.append(
            SequenceEntry(
                sequence_id=seq_id, resolution=resolution, frames=tuple(frames)
            )
        )
    stride = data.get("annotation_stride")
    return SequenceManifest(
        task=task,
        sequences=tuple(sequences),
        annotation_stride=int(stride) if stride else None,
        extra=data.get("extraction"),
    )


def save_manifest(manifest: SequenceManifest, path) -> None:
    path = Path(path)
    root = path.parent

    def rel(p: Path | None):
        if p is None:
            return None
        try:
            return Path(p).relative_to(root).as_posix()
        except ValueError:
            return Path(p).as_posix()

    data = {
        "format_version": MANIFEST_VERSION,
        "task": manifest.task,
        "annotation_stride": manifest.annotation_stride,
        "sequences": [
            {
                "id": seq.sequence_id,
                "resolution": list(seq.resolution),
                "frames": [
                    {
                        "index": f.index,
                        "feature": rel(f.feature),
                        **(
                            {"annotation": rel(f.annotation)}
                            if f.annotation is not None
                            else {}
                        ),
                    }
                    for f in seq.frames
                ],
            }
            for seq in manifest.sequences
        ],
    }
    if manifest.extra:
        data["extraction"] = manifest.extra
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def _fmt(value: float) -> str:
    return f"{value:.6f}"


def write_report(report: MetricsReport, path) -> None:
    """Region report: one row per (sequence, object), then the aggregate row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sequence", "object", "J", "F"])
        for row in report.rows:
            writer.writerow([row.sequence, row.object_id, _fmt(row.j), _fmt(row.f)])
        writer.writerow(["mean", "all", _fmt(report.j_mean), _fmt(report.f_mean)])


def write_semantic_report(rows: list[tuple[str, float]], mean_miou: float, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sequence", "mIoU"])
        for seq_id, value in rows:
            writer.writerow([seq_id, _fmt(value)])
        writer.writerow(["mean", _fmt(mean_miou)])


def write_keypoint_report(
    rows: list[tuple[str, dict[float, float]]], totals: dict[float, float],
    alphas: list[float], path,
):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sequence"] + [f"PCK@{a:g}" for a in alphas])
        for seq_id, values in rows:
            writer.writerow([seq_id] + [_fmt(values[a]) for a in alphas])
        writer.writerow(["mean"] + [_fmt(totals[a]) for a in alphas])


def write_sweep_csv(rows: list[dict], path) -> None:
    """One row per configuration, in grid order; blanks where not applicable."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(SWEEP_COLUMNS), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in SWEEP_COLUMNS})


def write_trace_csv(rows: list[tuple[str, int, float]], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sequence", "frame", "label_mass"])
        for seq_id, frame, mass in rows:
            writer.writerow([seq_id, frame, _fmt(mass)])
