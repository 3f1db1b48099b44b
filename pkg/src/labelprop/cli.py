"""Command-line harness: propagation runs, evaluation, sweeps, synthesis, traces.

Subcommands
-----------
propagate   run label propagation over a manifest, write per-frame predictions
evaluate    score predictions against the manifest's annotations
sweep       run a configuration grid, one CSV row per configuration
synth       generate a synthetic corpus in the standard dataset layout
trace       per-frame label-mass diagnostic over saved predictions

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 partial sweep
failure.  ``LABELPROP_WORKERS`` sets the default worker count; work units are
independent (sequence x configuration) jobs and outputs are assembled in a
deterministic order, so results are bitwise identical for any worker count.
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from labelprop.errors import ConfigError, FormatError, SpecError
from labelprop.grids import (
    Keypoint,
    KeypointSet,
    argmax_labels,
    keypoints_to_labelgrid,
    labelgrid_to_keypoints,
    onehot_downsample,
    resize_scores,
)
from labelprop.io import (
    FrameEntry,
    SequenceEntry,
    SequenceManifest,
    load_manifest,
    read_keypoints,
    read_mask,
    read_tensor,
    read_tensor_array,
    save_manifest,
    write_keypoint_report,
    write_keypoints,
    write_mask,
    write_report,
    write_semantic_report,
    write_sweep_csv,
    write_tensor_array,
    write_trace_csv,
)
from labelprop.metrics import (
    SequenceScore,
    boundary_f,
    davis_aggregate,
    default_boundary_tolerance,
    jaccard,
)
from labelprop.propagation import PropagationConfig, propagate_video
from labelprop.synth import SynthSpec, gen_synthetic_video

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PARTIAL = 3

_WORKERS_ENV = "LABELPROP_WORKERS"


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------

def _default_workers() -> int:
    value = os.environ.get(_WORKERS_ENV, "")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def _parallel_map(fn, payloads, workers: int) -> list:
    """Order-preserving map; results arrive in payload order."""
    if workers <= 1 or len(payloads) <= 1:
        return [fn(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, payloads))


def _to_grid(value: float, pixels: int, cells: int) -> float:
    # center-aligned coordinate mapping between pixel and cell rasters
    return (value + 0.5) * cells / pixels - 0.5


def _to_pixels(value: float, cells: int, pixels: int) -> float:
    return (value + 0.5) * pixels / cells - 0.5


def _load_config(path) -> PropagationConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(path, "json", str(exc)) from None
    return PropagationConfig.from_dict(data)


def _localization_label(loc) -> str:
    if loc is None or loc == "none":
        return "none"
    kind = loc.get("kind", "none")
    if kind == "fixed_region":
        metric = loc.get("metric", "chebyshev")
        return f"fixed_region:r={float(loc['radius']):g}:{metric}"
    if kind == "track":
        theta = float(loc.get("threshold", 0.5))
        margin = float(loc.get("margin", 2.0))
        return f"track:theta={theta:g}:margin={margin:g}"
    return "none"


def _load_sequence_inputs(seq: SequenceEntry, task: str):
    """Features plus the initial label grid at feature-grid resolution."""
    features = [read_tensor(f.feature) for f in seq.frames]
    grid_h, grid_w = features[0].height, features[0].width
    h_px, w_px = seq.resolution
    first = seq.frames[0]
    if task == "keypoint":
        kp = read_keypoints(first.annotation)
        scaled = KeypointSet(tuple(
            Keypoint(
                p.class_id,
                x=_to_grid(p.x, w_px, grid_w),
                y=_to_grid(p.y, h_px, grid_h),
                visible=p.visible,
            )
            for p in kp.points
        ))
        init = keypoints_to_labelgrid(scaled, grid_h, grid_w)
    else:
        init_map = read_mask(first.annotation)
        if init_map.shape != (h_px, w_px):
            raise FormatError(
                first.annotation, "resolution",
                f"annotation is {init_map.shape}, manifest says {(h_px, w_px)}",
            )
        init = onehot_downsample(init_map, grid_h, grid_w)
    return features, init


def _predict_sequence(seq: SequenceEntry, task: str, cfg: PropagationConfig):
    features, init = _load_sequence_inputs(seq, task)
    return propagate_video(features, init, cfg)


# ---------------------------------------------------------------------------
# propagate
# ---------------------------------------------------------------------------

def _write_predictions(seq, task, outputs, out_dir: Path, save_scores: bool):
    h_px, w_px = seq.resolution
    seq_dir = out_dir / seq.sequence_id
    for frame, grid in zip(seq.frames, outputs):
        if task == "keypoint":
            kp = labelgrid_to_keypoints(grid)
            scaled = KeypointSet(tuple(
                Keypoint(
                    p.class_id,
                    x=_to_pixels(p.x, grid.width, w_px),
                    y=_to_pixels(p.y, grid.height, h_px),
                    visible=p.visible,
                )
                for p in kp.points
            ))
            write_keypoints(scaled, seq_dir / f"{frame.index:05d}.txt")
        else:
            resized = resize_scores(grid, h_px, w_px)
            write_mask(argmax_labels(resized), seq_dir / f"{frame.index:05d}.png")
        if save_scores:
            write_tensor_array(grid.scores, seq_dir / "scores" / f"{frame.index:05d}.npy")


def _propagate_job(payload):
    manifest_path, seq_index, cfg_data, out_dir, save_scores = payload
    manifest = load_manifest(manifest_path)
    seq = manifest.sequences[seq_index]
    cfg = PropagationConfig.from_dict(cfg_data)
    outputs = _predict_sequence(seq, manifest.task, cfg)
    _write_predictions(seq, manifest.task, outputs, Path(out_dir), save_scores)
    return seq.sequence_id


def cmd_propagate(args) -> int:
    manifest = load_manifest(args.manifest)
    cfg = _load_config(args.config)
    out_dir = Path(args.out)
    payloads = [
        (str(args.manifest), i, cfg.to_dict(), str(out_dir), args.save_scores)
        for i in range(len(manifest.sequences))
    ]
    done = _parallel_map(_propagate_job, payloads, args.workers)
    for seq_id in done:
        print(f"propagated {seq_id}")
    print(f"wrote predictions for {len(done)} sequences to {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def _scored_frames(seq: SequenceEntry) -> list[FrameEntry]:
    # the first frame is the given annotation, never scored
    return [
        f for f in seq.frames[1:] if f.annotation is not None
    ]


def _missing_predictions(manifest, pred_root: Path) -> list[str]:
    suffix = ".txt" if manifest.task == "keypoint" else ".png"
    missing = []
    for seq in manifest.sequences:
        for frame in _scored_frames(seq):
            path = pred_root / seq.sequence_id / f"{frame.index:05d}{suffix}"
            if not path.exists():
                missing.append(f"{seq.sequence_id}/{frame.index:05d}{suffix}")
    return missing


def _evaluate_region_sequence(seq, pred_root: Path, tolerance=None):
    """Per-object J/F means over the scored frames of one sequence."""
    h_px, w_px = seq.resolution
    tol = tolerance if tolerance is not None else default_boundary_tolerance(h_px, w_px)
    init_map = read_mask(seq.frames[0].annotation)
    object_ids = sorted(int(v) for v in np.unique(init_map) if v != 0)
    if not object_ids:
        raise FormatError(
            seq.frames[0].annotation, "annotation", "no foreground objects"
        )
    j_acc = {obj: [] for obj in object_ids}
    f_acc = {obj: [] for obj in object_ids}
    for frame in _scored_frames(seq):
        gt = read_mask(frame.annotation)
        pred = read_mask(pred_root / seq.sequence_id / f"{frame.index:05d}.png")
        if pred.shape != gt.shape:
            raise FormatError(
                pred_root / seq.sequence_id / f"{frame.index:05d}.png",
                "resolution",
                f"prediction is {pred.shape}, annotation is {gt.shape}",
            )
        for obj in object_ids:
            j_acc[obj].append(jaccard(pred == obj, gt == obj))
            f_acc[obj].append(boundary_f(pred == obj, gt == obj, tol))
    return [
        (seq.sequence_id, obj, float(np.mean(j_acc[obj])), float(np.mean(f_acc[obj])))
        for obj in object_ids
    ]


def _evaluate_semantic_sequence(seq, pred_root: Path):
    """Sequence mIoU with per-class counts accumulated over scored frames."""
    inter: dict[int, int] = {}
    union: dict[int, int] = {}
    for frame in _scored_frames(seq):
        gt = read_mask(frame.annotation)
        pred = read_mask(pred_root / seq.sequence_id / f"{frame.index:05d}.png")
        for class_id in np.union1d(np.unique(gt), np.unique(pred)):
            c = int(class_id)
            pm = pred == c
            gm = gt == c
            inter[c] = inter.get(c, 0) + int(np.logical_and(pm, gm).sum())
            union[c] = union.get(c, 0) + int(np.logical_or(pm, gm).sum())
    ious = [inter[c] / union[c] for c in sorted(union) if union[c] > 0]
    if not ious:
        raise FormatError(
            pred_root / seq.sequence_id, "predictions", "nothing to score"
        )
    return float(np.mean(ious))


def _gt_norm(kp: KeypointSet) -> float:
    """PCK normalization: largest side of the visible-keypoint bounding box."""
    xs = [p.x for p in kp.points if p.visible]
    ys = [p.y for p in kp.points if p.visible]
    if not xs:
        return 0.0
    return max(max(xs) - min(xs), max(ys) - min(ys), 1.0)


def _evaluate_keypoint_sequence(seq, pred_root: Path, alphas):
    from labelprop.metrics import pck_counts

    correct = {a: 0 for a in alphas}
    total = {a: 0 for a in alphas}
    for frame in _scored_frames(seq):
        gt = read_keypoints(frame.annotation)
        pred = read_keypoints(pred_root / seq.sequence_id / f"{frame.index:05d}.txt")
        norm = _gt_norm(gt)
        if norm <= 0.0:
            continue  # no visible ground truth on this frame
        for a in alphas:
            c, t = pck_counts(pred, gt, a, norm)
            correct[a] += c
            total[a] += t
    return correct, total


def cmd_evaluate(args) -> int:
    manifest = load_manifest(args.manifest)
    pred_root = Path(args.pred)
    missing = _missing_predictions(manifest, pred_root)
    if missing:
        for item in missing:
            print(f"missing prediction: {item}", file=sys.stderr)
        print(f"evaluation aborted: {len(missing)} predictions missing",
              file=sys.stderr)
        return EXIT_DATA
    out = Path(args.out)

    if manifest.task == "region":
        rows = []
        for seq in manifest.sequences:
            for seq_id, obj, j, f in _evaluate_region_sequence(
                seq, pred_root, args.boundary_tolerance
            ):
                rows.append(SequenceScore(seq_id, obj, j, f))
        report = davis_aggregate(rows, per_sequence=args.per_sequence)
        write_report(report, out)
        for row in report.rows:
            print(f"{row.sequence} object {row.object_id}: "
                  f"J={row.j:.4f} F={row.f:.4f}")
        print(f"J_M={report.j_mean:.4f} J_O={report.j_recall:.4f} "
              f"F_M={report.f_mean:.4f} F_O={report.f_recall:.4f} "
              f"J&F_M={report.jf_mean:.4f}")
    elif manifest.task == "semantic":
        rows = [
            (seq.sequence_id, _evaluate_semantic_sequence(seq, pred_root))
            for seq in manifest.sequences
        ]
        mean_miou = float(np.mean(np.sort([v for _, v in rows])))
        write_semantic_report(rows, mean_miou, out)
        for seq_id, value in rows:
            print(f"{seq_id}: mIoU={value:.4f}")
        print(f"mIoU={mean_miou:.4f}")
    else:
        alphas = list(args.alphas)
        per_seq = []
        correct = {a: 0 for a in alphas}
        total = {a: 0 for a in alphas}
        for seq in manifest.sequences:
            c, t = _evaluate_keypoint_sequence(seq, pred_root, alphas)
            per_seq.append((
                seq.sequence_id,
                {a: (c[a] / t[a] if t[a] else 0.0) for a in alphas},
            ))
            for a in alphas:
                correct[a] += c[a]
                total[a] += t[a]
        totals = {a: (correct[a] / total[a] if total[a] else 0.0) for a in alphas}
        write_keypoint_report(per_seq, totals, alphas, out)
        for a in alphas:
            print(f"PCK@{a:g}={totals[a]:.4f}")
    print(f"report written to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def _grid_configs(grid_data: dict) -> list[dict]:
    """Cartesian product in documented order: T, k, n, aggregation,
    localization (outermost to innermost).

    Returns raw config dicts; validation happens per job so that an invalid
    combination fails its own sweep row instead of the whole sweep.
    """
    if "temperature" in grid_data and "inverse_temperature" in grid_data:
        raise ConfigError("give either temperature or inverse_temperature lists")
    if "inverse_temperature" in grid_data:
        inv = grid_data["inverse_temperature"]
        temperatures = [1.0 / float(v) for v in inv]
    else:
        temperatures = [float(v) for v in grid_data.get("temperature", [1.0])]
    ks = [int(v) for v in grid_data.get("k", [5])]
    ns = [int(v) for v in grid_data.get("n", [7])]
    aggregations = list(grid_data.get("aggregation", ["per_frame"]))
    localizations = [
        {"kind": loc} if isinstance(loc, str) else dict(loc)
        for loc in grid_data.get("localization", ["none"])
    ]
    for name, values in (
        ("temperature", temperatures), ("k", ks), ("n", ns),
        ("aggregation", aggregations), ("localization", localizations),
    ):
        if not values:
            raise ConfigError(f"sweep grid list {name!r} is empty")
    fixed = {
        key: grid_data[key]
        for key in ("include_first", "softmax_order", "normalize_features")
        if key in grid_data
    }
    configs = []
    for t, k, n, agg, loc in itertools.product(
        temperatures, ks, ns, aggregations, localizations
    ):
        data = dict(fixed)
        data.update(
            {"temperature": t, "k": k, "n": n, "aggregation": agg,
             "localization": loc}
        )
        configs.append(data)
    return configs


def _sweep_job(payload):
    """Score one (configuration, sequence) pair in memory."""
    manifest_path, seq_index, cfg_data, boundary_tolerance = payload
    manifest = load_manifest(manifest_path)
    seq = manifest.sequences[seq_index]
    try:
        cfg = PropagationConfig.from_dict(cfg_data)
        outputs = _predict_sequence(seq, manifest.task, cfg)
        h_px, w_px = seq.resolution
        by_index = {f.index: out for f, out in zip(seq.frames, outputs)}
        if manifest.task == "semantic":
            inter: dict[int, int] = {}
            union: dict[int, int] = {}
            for frame in _scored_frames(seq):
                gt = read_mask(frame.annotation)
                pred = argmax_labels(resize_scores(by_index[frame.index], h_px, w_px))
                for class_id in np.union1d(np.unique(gt), np.unique(pred)):
                    c = int(class_id)
                    pm = pred == c
                    gm = gt == c
                    inter[c] = inter.get(c, 0) + int(np.logical_and(pm, gm).sum())
                    union[c] = union.get(c, 0) + int(np.logical_or(pm, gm).sum())
            ious = [inter[c] / union[c] for c in sorted(union) if union[c] > 0]
            return ("miou", seq.sequence_id, float(np.mean(ious)))
        tol = (
            boundary_tolerance
            if boundary_tolerance is not None
            else default_boundary_tolerance(h_px, w_px)
        )
        init_map = read_mask(seq.frames[0].annotation)
        object_ids = sorted(int(v) for v in np.unique(init_map) if v != 0)
        rows = []
        for obj in object_ids:
            js, fs = [], []
            for frame in _scored_frames(seq):
                gt = read_mask(frame.annotation)
                pred = argmax_labels(resize_scores(by_index[frame.index], h_px, w_px))
                js.append(jaccard(pred == obj, gt == obj))
                fs.append(boundary_f(pred == obj, gt == obj, tol))
            rows.append((seq.sequence_id, obj, float(np.mean(js)),
                         float(np.mean(fs))))
        return ("jf", seq.sequence_id, rows)
    except Exception as exc:  # partial failures are recorded per sweep row
        return ("error", seq.sequence_id, f"{type(exc).__name__}: {exc}")


def _fmt6(value: float) -> str:
    return f"{value:.6f}"


def cmd_sweep(args) -> int:
    manifest = load_manifest(args.manifest)
    if manifest.task == "keypoint":
        raise ConfigError("sweep supports region and semantic manifests")
    try:
        grid_data = json.loads(Path(args.grid).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(args.grid, "json", str(exc)) from None
    configs = _grid_configs(grid_data)
    n_seq = len(manifest.sequences)
    print(f"sweep: {len(configs)} configurations x {n_seq} sequences "
          f"= {len(configs) * n_seq} jobs")

    payloads = [
        (str(args.manifest), s, cfg, args.boundary_tolerance)
        for cfg in configs
        for s in range(n_seq)
    ]
    results = _parallel_map(_sweep_job, payloads, args.workers)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    sweep_rows = []
    had_errors = False
    for c, cfg in enumerate(configs):
        chunk = results[c * n_seq : (c + 1) * n_seq]
        row = {
            "T": f"{cfg['temperature']:g}",
            "k": cfg["k"],
            "n": cfg["n"],
            "aggregation": cfg["aggregation"],
            "localization": _localization_label(cfg["localization"]),
        }
        errors = [f"{r[1]}: {r[2]}" for r in chunk if r[0] == "error"]
        if errors:
            had_errors = True
            row["error"] = "; ".join(errors)
        elif manifest.task == "semantic":
            values = [r[2] for r in chunk]
            row["mIoU"] = _fmt6(float(np.mean(np.sort(values))))
        else:
            scores = [
                SequenceScore(sid, obj, j, f)
                for r in chunk
                for sid, obj, j, f in r[2]
            ]
            report = davis_aggregate(scores)
            row.update(
                {
                    "J_M": _fmt6(report.j_mean),
                    "J_O": _fmt6(report.j_recall),
                    "F_M": _fmt6(report.f_mean),
                    "F_O": _fmt6(report.f_recall),
                    "JF_M": _fmt6(report.jf_mean),
                }
            )
        sweep_rows.append(row)

    sweep_path = out_dir / "sweep.csv"
    write_sweep_csv(sweep_rows, sweep_path)
    print(f"sweep table written to {sweep_path}")
    _write_plot_series(sweep_rows, configs, manifest.task, out_dir)
    return EXIT_PARTIAL if had_errors else EXIT_OK


def _write_plot_series(sweep_rows, configs, task, out_dir: Path):
    """One series file per (aggregation, localization) pair and swept axis."""
    metric = "mIoU" if task == "semantic" else "JF_M"
    axes = {
        "T": [f"{c['temperature']:g}" for c in configs],
        "k": [str(c["k"]) for c in configs],
        "n": [str(c["n"]) for c in configs],
    }
    combos = sorted({(r["aggregation"], r["localization"]) for r in sweep_rows})
    for axis, values in axes.items():
        distinct = list(dict.fromkeys(values))
        if len(distinct) < 2:
            continue
        for agg, loc in combos:
            series = []
            for value in distinct:
                cell = [
                    float(row[metric])
                    for row, v in zip(sweep_rows, values)
                    if v == value and row["aggregation"] == agg
                    and row["localization"] == loc and row.get(metric)
                ]
                if cell:
                    series.append((value, float(np.mean(np.sort(cell)))))
            if not series:
                continue
            slug = loc.replace(":", "-").replace("=", "")
            path = out_dir / f"plot__{agg}__{slug}__{axis}.csv"
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(f"{axis},{metric}\n")
                for value, mean in series:
                    fh.write(f"{value},{_fmt6(mean)}\n")


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    try:
        data = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(args.spec, "json", str(exc)) from None
    spec_dicts = data["sequences"] if "sequences" in data else [data]
    out_dir = Path(args.out)
    entries = []
    for i, spec_dict in enumerate(spec_dicts):
        spec_dict = dict(spec_dict)
        seq_id = spec_dict.pop("id", f"synth{i}")
        if args.seed is not None:
            spec_dict["seed"] = args.seed + i
        spec = SynthSpec.from_dict(spec_dict)
        features, labels = gen_synthetic_video(spec)
        frames = []
        for t, (feat, lab) in enumerate(zip(features, labels)):
            feat_path = out_dir / "features" / seq_id / f"{t:05d}.npy"
            anno_path = out_dir / "annotations" / seq_id / f"{t:05d}.png"
            write_tensor_array(feat.values, feat_path)
            write_mask(argmax_labels(lab), anno_path)
            frames.append(
                FrameEntry(index=t, feature=feat_path, annotation=anno_path)
            )
        entries.append(
            SequenceEntry(
                sequence_id=seq_id,
                resolution=(spec.height, spec.width),
                frames=tuple(frames),
            )
        )
        print(f"generated {seq_id}: {spec.frames} frames of "
              f"{spec.height}x{spec.width}")
    manifest = SequenceManifest(task="region", sequences=tuple(entries),
                                annotation_stride=1)
    save_manifest(manifest, out_dir / "manifest.json")
    print(f"manifest written to {out_dir / 'manifest.json'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# trace
# ---------------------------------------------------------------------------

def cmd_trace(args) -> int:
    pred_root = Path(args.pred)
    if not pred_root.is_dir():
        print(f"predictions directory not found: {pred_root}", file=sys.stderr)
        return EXIT_DATA
    rows = []
    for seq_dir in sorted(p for p in pred_root.iterdir() if p.is_dir()):
        scores_dir = seq_dir / "scores"
        score_files = sorted(scores_dir.glob("*.npy")) if scores_dir.is_dir() else []
        if score_files:
            for path in score_files:
                arr = read_tensor_array(path).astype(np.float64)
                rows.append(
                    (seq_dir.name, int(path.stem), float(arr.sum(axis=0).mean()))
                )
        else:
            # hard masks are one-hot by construction: mass is identically 1
            for path in sorted(seq_dir.glob("*.png")):
                read_mask(path)
                rows.append((seq_dir.name, int(path.stem), 1.0))
    if not rows:
        print(f"no predictions found under {pred_root}", file=sys.stderr)
        return EXIT_DATA
    write_trace_csv(rows, args.out)
    print(f"label-mass trace for {len(rows)} frames written to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="labelprop",
                     description="video label propagation harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("propagate", parents=[], help="run propagation")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=_default_workers())
    p.add_argument("--save-scores", action="store_true",
                   help="also dump soft score tensors per frame")
    p.set_defaults(fn=cmd_propagate)

    p = sub.add_parser("evaluate", help="score predictions")
    p.add_argument("--manifest", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--per-sequence", action="store_true",
                   help="average objects within a sequence before the mean")
    p.add_argument("--boundary-tolerance", type=float, default=None)
    p.add_argument("--alphas", type=float, nargs="+", default=[0.1, 0.2],
                   help="PCK thresholds for keypoint manifests")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("sweep", help="run a configuration grid")
    p.add_argument("--grid", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=_default_workers())
    p.add_argument("--boundary-tolerance", type=float, default=None)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None,
                   help="override the seed (sequence i uses seed + i)")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("trace", help="label-mass diagnostic")
    p.add_argument("--pred", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_trace)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, SpecError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
