"""Command-line interface.

Commands: segment, features, train, predict, evaluate, pipeline, bench,
synth. Exit codes: 0 success, 2 validation error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import evaluate as ev
from .classify import SvmParams, load_model, save_model, svm_predict, svm_train
from .core import load_frame, load_mask
from .errors import CapsegError, InvalidParam, ValidationError
from .features import (
    LbpParams,
    extract_features,
    label_superpixels,
    load_features,
    save_features,
)
from .pipeline import (
    PipelineConfig,
    _coerce,
    config_overrides,
    load_config,
    run_pipeline,
)
from .selection import ScorerParams, laplacian_scores, select_features
from .superpixel import (
    QsParams,
    SlicParams,
    load_superpixel_map,
    quickshift_segment,
    save_superpixel_map,
    slic_segment,
)
from .synth import synth_dataset


def _say(msg: str) -> None:
    print(msg, flush=True)


def _cmd_synth(args) -> None:
    manifest = synth_dataset(
        args.out,
        patients=args.patients,
        frames=args.frames,
        size=args.size,
        seed=args.seed,
    )
    _say(f"wrote synthetic dataset: {manifest}")


def _cmd_segment(args) -> None:
    frame = load_frame(args.image)
    if args.algorithm == "slic":
        spmap = slic_segment(
            frame,
            SlicParams(
                n_superpixels=args.n,
                compactness=args.compactness,
                iterations=args.iterations,
                enforce_bounds=not args.no_enforce_bounds,
            ),
        )
    else:
        spmap = quickshift_segment(
            frame, QsParams(kernel_size=args.kernel_size, max_dist=args.max_dist)
        )
    save_superpixel_map(spmap, args.out)
    _say(f"{args.algorithm}: {spmap.k} superpixels -> {args.out}")


def _cmd_features(args) -> None:
    frame = load_frame(args.image)
    spmap = load_superpixel_map(args.map)
    feats = extract_features(
        frame, spmap, LbpParams(neighbors=args.neighbors, radius=args.radius)
    )
    if args.mask:
        mask = load_mask(args.mask, shape=frame.pixels.shape[:2])
        sp = label_superpixels(spmap, mask, args.threshold)
        labels, overlap = sp.labels, sp.overlap
    else:
        labels = overlap = None
    save_features(args.out, feats, labels, overlap)
    _say(f"{feats.shape[0]} superpixels x {feats.shape[1]} features -> {args.out}")


def _cmd_train(args) -> None:
    blocks = [load_features(p) for p in args.features]
    x = np.vstack([b[0] for b in blocks])
    y = np.concatenate([b[1] for b in blocks])
    scores = laplacian_scores(
        x,
        ScorerParams(
            k_neighbors=args.k_neighbors, heat_t=args.heat_t, keep=args.keep
        ),
    )
    ranking = select_features(scores, args.keep)
    model = svm_train(
        x[:, ranking.selected],
        y,
        SvmParams(
            kernel=args.kernel,
            c=args.C,
            gamma=args.gamma,
            tol=args.tol,
            max_passes=args.max_passes,
            seed=args.seed,
        ),
        selected=ranking.selected,
        in_width=x.shape[1],
        trained_for=args.trained_for,
    )
    save_model(model, args.out)
    flag = "" if model.converged else " (iteration cap hit)"
    _say(
        f"trained on {x.shape[0]} superpixels, kept {args.keep} features, "
        f"{model.support_vectors.shape[0]} support vectors{flag} -> {args.out}"
    )


def _cmd_predict(args) -> None:
    model = load_model(args.model)
    feats, _, _ = load_features(args.features)
    labels, decision = svm_predict(model, feats)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "decision"])
        for lab, dec in zip(labels, decision):
            writer.writerow([int(lab), repr(float(dec))])
    _say(f"{int(labels.sum())}/{labels.size} superpixels abnormal -> {args.out}")


def _read_predictions(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0] != "label":
            raise InvalidParam(f"{path}: expected a predictions CSV")
        return np.array([int(row[0]) for row in reader], dtype=np.uint8)


def _cmd_evaluate(args) -> None:
    spmap = load_superpixel_map(args.map)
    mask = load_mask(args.mask, shape=spmap.labels.shape)
    pred = _read_predictions(args.pred)
    conf = ev.pixel_confusion(pred, spmap, mask)
    m = ev.measures(conf)
    _say(f"tp={conf.tp} fn={conf.fn} tn={conf.tn} fp={conf.fp}")
    for name in ("sensitivity", "specificity", "accuracy", "precision"):
        value = getattr(m, name)
        _say(f"{name} = " + ("NA" if value is None else f"{value:.4f}"))
    if args.overlay:
        frame = load_frame(args.image) if args.image else None
        if frame is None:
            raise InvalidParam("--overlay needs --image")
        ev.write_overlay(frame, spmap, pred, args.overlay)
        _say(f"overlay -> {args.overlay}")


def _pipeline_config(args) -> PipelineConfig:
    config = load_config(args.config) if args.config else PipelineConfig()
    counts = (
        tuple(int(v) for v in args.counts.split(",")) if args.counts else None
    )
    extra = {}
    for pair in args.set or []:
        key, sep, value = pair.partition("=")
        if not sep:
            raise InvalidParam(f"--set expects key=value, got {pair!r}")
        extra[key.strip()] = _coerce(key.strip(), value)
    return config_overrides(
        config,
        manifest=args.manifest,
        output_dir=args.output_dir,
        superpixel_counts=counts,
        algorithm=args.algorithm,
        split_seed=args.seed,
        **extra,
    )


def _cmd_pipeline(args) -> None:
    config = _pipeline_config(args)
    report = run_pipeline(config, log=_say if not args.quiet else None)
    _say(ev.report_to_csv(report).rstrip())
    _say(f"artifacts under {config.output_dir}")


def _cmd_bench(args) -> None:
    paths = []
    for entry in args.frames:
        p = Path(entry)
        if p.is_dir():
            paths.extend(sorted(p.glob("*.png")))
        else:
            paths.append(p)
    config = PipelineConfig() if not args.config else load_config(args.config)
    overrides = {}
    if args.slic_n is not None:
        overrides["bench_slic_n"] = args.slic_n
    if args.kernel_sizes:
        overrides["qs_kernel_sizes"] = tuple(
            float(v) for v in args.kernel_sizes.split(",")
        )
    if args.max_dists:
        overrides["qs_max_dists"] = tuple(float(v) for v in args.max_dists.split(","))
    if args.repeats is not None:
        overrides["bench_repeats"] = args.repeats
    if args.warmup is not None:
        overrides["bench_warmup"] = args.warmup
    config = config_overrides(config, **overrides)
    rows = bench_mod.run_bench(
        config, paths, out_csv=args.out, log=_say if not args.quiet else None
    )
    _say(bench_mod.bench_summary(rows))
    if args.out:
        _say(f"rows -> {args.out}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="capseg",
        description="Superpixel segmentation and SVM classification of "
        "abnormal regions in endoscopy-style frames.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the synthetic benchmark dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--patients", type=int, default=10)
    p.add_argument("--frames", type=int, default=60)
    p.add_argument("--size", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("segment", help="superpixel-segment one frame")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True, help="label map PNG (+ .k sidecar)")
    p.add_argument("--algorithm", choices=("slic", "quickshift"), default="slic")
    p.add_argument("--n", type=int, default=100, help="slic superpixel count")
    p.add_argument("--compactness", type=float, default=10.0)
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--no-enforce-bounds", action="store_true")
    p.add_argument("--kernel-size", type=float, default=5.0, help="qs sigma")
    p.add_argument("--max-dist", type=float, default=10.0, help="qs tau")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_segment)

    p = sub.add_parser("features", help="extract per-superpixel features")
    p.add_argument("--image", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--neighbors", type=int, default=8)
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--mask", help="ground-truth mask for labeling")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_features)

    p = sub.add_parser("train", help="rank features and train the SVM")
    p.add_argument("--features", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--keep", type=int, default=20)
    p.add_argument("--k-neighbors", type=int, default=5)
    p.add_argument("--heat-t", type=float, default=None)
    p.add_argument("--kernel", choices=("linear", "rbf"), default="rbf")
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--max-passes", type=int, default=5)
    p.add_argument("--trained-for", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", help="classify superpixels from features")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("evaluate", help="pixel-level measures for one frame")
    p.add_argument("--map", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--pred", required=True, help="predictions CSV")
    p.add_argument("--image", help="frame for the overlay")
    p.add_argument("--overlay", help="write tinted overlay PNG here")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("pipeline", help="run the full method end to end")
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--manifest")
    p.add_argument("--output-dir")
    p.add_argument("--counts", help="comma-separated superpixel counts")
    p.add_argument("--algorithm", choices=("slic", "quickshift"))
    p.add_argument("--seed", type=int, default=None, help="split + training seed")
    p.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override any config key, repeatable",
    )
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("bench", help="SLIC vs quick shift timing study")
    p.add_argument("--frames", nargs="+", required=True, help="PNG files or dirs")
    p.add_argument("--out", help="write rows CSV here")
    p.add_argument("--config")
    p.add_argument("--slic-n", type=int, default=None)
    p.add_argument("--kernel-sizes", help="comma-separated qs sigmas")
    p.add_argument("--max-dists", help="comma-separated qs taus")
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--warmup", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=_cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CapsegError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
