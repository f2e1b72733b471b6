"""End-to-end orchestration: segment -> extract -> split -> select -> train
-> predict -> evaluate, with per-stage content-hash caching and atomic
artifact writes.
"""

from __future__ import annotations

import dataclasses
import hashlib
import os
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import evaluate as ev
from .classify import SvmParams, save_model, svm_predict, svm_train
from .core import (
    DatasetManifest,
    Frame,
    Mask,
    load_frame,
    load_manifest,
    load_mask,
    split_by_patient,
)
from .errors import InvalidParam, SingleClass
from .features import (
    LbpParams,
    extract_features,
    label_superpixels,
    load_features,
    save_features,
)
from .selection import ScorerParams, laplacian_scores, save_ranking, select_features
from .superpixel import (
    QsParams,
    SlicParams,
    load_superpixel_map,
    quickshift_segment,
    save_superpixel_map,
    slic_segment,
)

DEFAULT_COUNTS = (25, 50, 100, 250, 500)
QS_GRID_SIGMAS = (5.0, 10.0)
QS_GRID_TAUS = (10.0, 15.0, 20.0, 25.0, 30.0, 100.0, 1000.0)


@dataclass
class PipelineConfig:
    manifest: str = "manifest.csv"
    output_dir: str = "out"
    superpixel_counts: tuple = DEFAULT_COUNTS
    algorithm: str = "slic"
    slic_compactness: float = 10.0
    slic_iterations: int = 10
    slic_enforce_bounds: bool = True
    qs_kernel_size: float = 5.0
    qs_max_dist: float = 10.0
    qs_kernel_sizes: tuple = QS_GRID_SIGMAS  # bench grid
    qs_max_dists: tuple = QS_GRID_TAUS  # bench grid
    lbp_neighbors: int = 8
    lbp_radius: float = 1.0
    select_k_neighbors: int = 5
    select_heat_t: float | None = None
    select_keep: int = 20
    svm_kernel: str = "rbf"
    svm_c: float = 1.0
    svm_gamma: float | None = None
    svm_tol: float = 1e-3
    svm_max_passes: int = 5
    split_seed: int = 0
    min_train_frames: int = 6
    label_threshold: float = 0.5
    bench_slic_n: int = 100
    bench_warmup: int = 3
    bench_repeats: int = 1

    def __post_init__(self):
        if not self.superpixel_counts:
            raise InvalidParam("superpixel_counts must not be empty")
        if any(n < 4 for n in self.superpixel_counts):
            raise InvalidParam("every superpixel count must be >= 4")
        if self.algorithm not in ("slic", "quickshift"):
            raise InvalidParam(f"unknown algorithm {self.algorithm!r}")

    def lbp_params(self) -> LbpParams:
        return LbpParams(neighbors=self.lbp_neighbors, radius=self.lbp_radius)

    def scorer_params(self) -> ScorerParams:
        return ScorerParams(
            k_neighbors=self.select_k_neighbors,
            heat_t=self.select_heat_t,
            keep=self.select_keep,
        )

    def svm_params(self) -> SvmParams:
        return SvmParams(
            kernel=self.svm_kernel,
            c=self.svm_c,
            gamma=self.svm_gamma,
            tol=self.svm_tol,
            max_passes=self.svm_max_passes,
            seed=self.split_seed,
        )


_TUPLE_FIELDS = {"superpixel_counts", "qs_kernel_sizes", "qs_max_dists"}
_OPTIONAL_FLOATS = {"select_heat_t", "svm_gamma"}
_BOOL_FIELDS = {"slic_enforce_bounds"}


def _coerce(name: str, value: str):
    fields = {f.name: f for f in dataclasses.fields(PipelineConfig)}
    if name not in fields:
        raise InvalidParam(f"unknown config key {name!r}")
    value = value.strip()
    if name in _TUPLE_FIELDS:
        parts = [p.strip() for p in value.split(",") if p.strip()]
        conv = int if name == "superpixel_counts" else float
        return tuple(conv(p) for p in parts)
    if name in _OPTIONAL_FLOATS:
        return None if value.lower() in ("auto", "none", "") else float(value)
    if name in _BOOL_FIELDS:
        if value.lower() in ("true", "1", "yes"):
            return True
        if value.lower() in ("false", "0", "no"):
            return False
        raise InvalidParam(f"{name}: expected a boolean, got {value!r}")
    default = fields[name].default
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value


def load_config(path) -> PipelineConfig:
    """Parse a flat `key = value` config file (# starts a comment)."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidParam(f"{path}:{lineno}: expected key = value")
        key, _, val = line.partition("=")
        values[key.strip()] = _coerce(key.strip(), val)
    return PipelineConfig(**values)


def config_overrides(config: PipelineConfig, **overrides) -> PipelineConfig:
    values = dataclasses.asdict(config)
    for key, val in overrides.items():
        if val is None:
            continue
        if key not in values:
            raise InvalidParam(f"unknown config key {key!r}")
        values[key] = val
    return PipelineConfig(**values)


# ---------------------------------------------------------------------------
# Atomic writes and content-hash caching
# ---------------------------------------------------------------------------


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _digest(*parts) -> str:
    h = hashlib.sha256()
    for part in parts:
        data = part if isinstance(part, bytes) else repr(part).encode()
        h.update(len(str(len(data))).to_bytes(1, "big"))
        h.update(data)
    return h.hexdigest()[:24]


class _StageCache:
    def __init__(self, root: Path):
        self.root = root
        root.mkdir(parents=True, exist_ok=True)

    def seg_path(self, key: str) -> Path:
        return self.root / f"seg_{key}.png"

    def feat_path(self, key: str) -> Path:
        return self.root / f"feat_{key}.csv"


def _segment_one(frame: Frame, config: PipelineConfig, n: int):
    if config.algorithm == "slic":
        return slic_segment(
            frame,
            SlicParams(
                n_superpixels=n,
                compactness=config.slic_compactness,
                iterations=config.slic_iterations,
                enforce_bounds=config.slic_enforce_bounds,
            ),
        )
    return quickshift_segment(
        frame,
        QsParams(kernel_size=config.qs_kernel_size, max_dist=config.qs_max_dist),
    )


def _seg_tag(config: PipelineConfig, n: int) -> str:
    if config.algorithm == "slic":
        return (
            f"slic n={n} m={config.slic_compactness} it={config.slic_iterations} "
            f"eb={config.slic_enforce_bounds}"
        )
    return f"qs sigma={config.qs_kernel_size} tau={config.qs_max_dist}"


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------


def _resolve(base: Path, rel: str) -> Path:
    p = Path(rel)
    return p if p.is_absolute() else base / p


def run_pipeline(config: PipelineConfig, log=None) -> ev.Report:
    """Run the full method for every configured superpixel count and write
    models, feature CSVs, rankings, overlays, and the final report under
    config.output_dir. Fully reproducible from (config, seed)."""
    say = log or (lambda msg: None)
    t_start = time.time()

    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write_probe"
    probe.write_text("", encoding="utf-8")
    probe.unlink()
    for sub in ("models", "features", "overlays", "rankings"):
        (out / sub).mkdir(exist_ok=True)
    cache = _StageCache(out / "cache")

    manifest: DatasetManifest = load_manifest(config.manifest)
    base = Path(config.manifest).parent
    split = split_by_patient(manifest, config.min_train_frames, config.split_seed)

    lbp_params = config.lbp_params()
    counts = (
        tuple(config.superpixel_counts) if config.algorithm == "slic" else (0,)
    )

    frames_bytes = [
        _resolve(base, rec.frame_path).read_bytes() for rec in manifest.records
    ]
    entries = []
    model_info = {}
    for n in counts:
        say(f"[n={n}] segmenting + extracting features for "
            f"{len(manifest.records)} frames")
        feats_all, labels_all, maps = [], [], []
        for idx, rec in enumerate(manifest.records):
            frame = load_frame(_resolve(base, rec.frame_path))
            if rec.mask_path:
                mask = load_mask(
                    _resolve(base, rec.mask_path), shape=frame.pixels.shape[:2]
                )
                mask_bytes = _resolve(base, rec.mask_path).read_bytes()
            else:
                mask = Mask(np.zeros((frame.height, frame.width), dtype=np.uint8))
                mask_bytes = b"none"

            seg_key = _digest(frames_bytes[idx], _seg_tag(config, n))
            seg_file = cache.seg_path(seg_key)
            if seg_file.exists():
                spmap = load_superpixel_map(seg_file)
            else:
                spmap = _segment_one(frame, config, n)
                tmp = seg_file.with_name(seg_file.name + ".tmp")
                save_superpixel_map(spmap, tmp)
                os.replace(str(tmp) + ".k", str(seg_file) + ".k")
                os.replace(tmp, seg_file)

            feat_key = _digest(
                seg_key,
                mask_bytes,
                f"P={lbp_params.neighbors} R={lbp_params.radius} "
                f"thr={config.label_threshold}",
            )
            feat_file = cache.feat_path(feat_key)
            if feat_file.exists():
                feats, labels, overlap = load_features(feat_file)
            else:
                feats = extract_features(frame, spmap, lbp_params)
                sp_labels = label_superpixels(spmap, mask, config.label_threshold)
                labels, overlap = sp_labels.labels, sp_labels.overlap
                tmp = feat_file.with_name(feat_file.name + ".tmp")
                save_features(tmp, feats, labels, overlap)
                os.replace(tmp, feat_file)

            stem = Path(rec.frame_path).stem
            save_features(
                out / "features" / f"{stem}_n{n}.csv", feats, labels, overlap
            )
            feats_all.append(feats)
            labels_all.append(labels)
            maps.append((spmap, mask))

        x_train = np.vstack([feats_all[i] for i in split.train])
        y_train = np.concatenate([labels_all[i] for i in split.train])
        if np.unique(y_train).size < 2:
            raise SingleClass(
                "training split has a single superpixel class; "
                "check masks and label threshold"
            )

        say(f"[n={n}] ranking features on {x_train.shape[0]} training superpixels")
        scores = laplacian_scores(x_train, config.scorer_params())
        ranking = select_features(scores, config.scorer_params().keep)
        save_ranking(out / "rankings" / f"ranking_n{n}.csv", ranking)

        say(f"[n={n}] training SVM")
        model = svm_train(
            x_train[:, ranking.selected],
            y_train,
            config.svm_params(),
            selected=ranking.selected,
            in_width=x_train.shape[1],
            trained_for=n,
        )
        model_path = out / "models" / f"svm_n{n}.model"
        tmp = model_path.with_name(model_path.name + ".tmp")
        save_model(model, tmp)
        os.replace(tmp, model_path)
        model_info[str(n)] = {
            "path": str(model_path),
            "support_vectors": int(model.support_vectors.shape[0]),
            "converged": model.converged,
        }

        say(f"[n={n}] predicting + evaluating {len(split.test)} test frames")
        for idx in split.test:
            rec = manifest.records[idx]
            pred, _ = svm_predict(model, feats_all[idx])
            spmap, mask = maps[idx]
            conf = ev.pixel_confusion(pred, spmap, mask)
            entries.append((rec.disease, n, conf))
            frame = load_frame(_resolve(base, rec.frame_path))
            stem = Path(rec.frame_path).stem
            ev.write_overlay(frame, spmap, pred, out / "overlays" / f"{stem}_n{n}.png")

    report = ev.aggregate(entries)
    report.metadata = {
        "config": {
            k: (list(v) if isinstance(v, tuple) else v)
            for k, v in dataclasses.asdict(config).items()
        },
        "averaging": "micro (confusions pooled before ratios)",
        "split_seed": config.split_seed,
        "train_records": split.train,
        "test_records": split.test,
        "normal_frames_included": sum(
            1 for i in split.test if manifest.records[i].disease == "normal"
        ),
        "models": model_info,
        "threads": 1,
        "started_unix": t_start,
        "finished_unix": time.time(),
    }
    atomic_write_text(out / "report.csv", ev.report_to_csv(report))
    atomic_write_text(out / "report_meta.json", ev.metadata_to_json(report))
    return report
