"""Wall-clock comparison of SLIC and quick shift at desk scale.

Times (a) SLIC segmentation alone, (b) the full SLIC method (segmentation,
feature extraction, SVM prediction), and (c) quick shift segmentation over
a (kernel_size, max_dist) grid. Warmup runs are discarded so JIT
compilation and cold caches never pollute the numbers; everything runs
single-threaded for comparability.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

import numpy as np

from .classify import SvmParams, svm_predict, svm_train
from .core import Frame, load_frame
from .errors import TooFewFrames
from .features import extract_features
from .pipeline import PipelineConfig, atomic_write_text
from .superpixel import QsParams, SlicParams, quickshift_segment, slic_segment

MIN_FRAMES = 5


@dataclass
class BenchRow:
    algorithm: str
    params: str
    frames: int
    mean_seconds: float
    std_seconds: float
    stage: str  # "segment_only" | "full_method"


def _time_per_frame(fn, frames, repeats: int) -> list[float]:
    """Best-of-`repeats` wall time per frame (monotonic clock)."""
    times = []
    for frame in frames:
        best = float("inf")
        for _ in range(repeats):
            t0 = time.perf_counter()
            fn(frame)
            best = min(best, time.perf_counter() - t0)
        times.append(best)
    return times


def _row(algorithm, params, times, stage) -> BenchRow:
    return BenchRow(
        algorithm=algorithm,
        params=params,
        frames=len(times),
        mean_seconds=statistics.fmean(times),
        std_seconds=statistics.pstdev(times),
        stage=stage,
    )


def run_bench(
    config: PipelineConfig, frames: list, out_csv=None, log=None
) -> list[BenchRow]:
    """Benchmark over >= 5 frames (paths or Frame objects)."""
    say = log or (lambda msg: None)
    if len(frames) < MIN_FRAMES:
        raise TooFewFrames(f"need at least {MIN_FRAMES} frames, got {len(frames)}")
    frames = [f if isinstance(f, Frame) else load_frame(f) for f in frames]
    warmup = max(3, config.bench_warmup)
    repeats = max(1, config.bench_repeats)

    slic_params = SlicParams(
        n_superpixels=config.bench_slic_n,
        compactness=config.slic_compactness,
        iterations=config.slic_iterations,
        enforce_bounds=config.slic_enforce_bounds,
    )
    lbp_params = config.lbp_params()

    say(f"warmup: {warmup} discarded iterations per algorithm")
    warm_map = None
    for _ in range(warmup):
        warm_map = slic_segment(frames[0], slic_params)
    warm_feats = extract_features(frames[0], warm_map, lbp_params)
    # throwaway model so full-method prediction has realistic kernel work;
    # alternating labels make most superpixels support vectors
    toy_y = np.arange(warm_feats.shape[0]) % 2
    model = svm_train(
        warm_feats,
        toy_y,
        SvmParams(
            kernel=config.svm_kernel,
            c=config.svm_c,
            gamma=config.svm_gamma,
            tol=config.svm_tol,
            max_passes=config.svm_max_passes,
            seed=config.split_seed,
        ),
    )
    svm_predict(model, warm_feats)
    qs_warm = QsParams(
        kernel_size=config.qs_kernel_sizes[0], max_dist=config.qs_max_dists[0]
    )
    for _ in range(warmup):
        quickshift_segment(frames[0], qs_warm)

    rows = []
    say(f"slic n={config.bench_slic_n}: segmentation only")
    times = _time_per_frame(lambda f: slic_segment(f, slic_params), frames, repeats)
    rows.append(_row("slic", f"n={config.bench_slic_n}", times, "segment_only"))

    say(f"slic n={config.bench_slic_n}: full method")

    def full_method(frame):
        spmap = slic_segment(frame, slic_params)
        feats = extract_features(frame, spmap, lbp_params)
        svm_predict(model, feats)

    times = _time_per_frame(full_method, frames, repeats)
    rows.append(_row("slic", f"n={config.bench_slic_n}", times, "full_method"))

    for sigma in config.qs_kernel_sizes:
        for tau in config.qs_max_dists:
            say(f"quickshift sigma={sigma} tau={tau}")
            qs = QsParams(kernel_size=sigma, max_dist=tau)
            times = _time_per_frame(
                lambda f: quickshift_segment(f, qs), frames, repeats
            )
            rows.append(
                _row("quickshift", f"sigma={sigma:g} tau={tau:g}", times, "segment_only")
            )

    if out_csv is not None:
        atomic_write_text(out_csv, bench_to_csv(rows))
    return rows


def bench_to_csv(rows: list[BenchRow]) -> str:
    lines = ["algorithm,params,frames,mean_seconds,std_seconds,stage"]
    for r in rows:
        lines.append(
            f"{r.algorithm},{r.params},{r.frames},"
            f"{r.mean_seconds:.6f},{r.std_seconds:.6f},{r.stage}"
        )
    return "\n".join(lines) + "\n"


def bench_summary(rows: list[BenchRow]) -> str:
    """Human-readable comparison, one line per row plus a speed verdict."""
    out = []
    for r in rows:
        out.append(
            f"{r.algorithm:10s} {r.stage:12s} {r.params:24s} "
            f"mean {r.mean_seconds * 1000:9.1f} ms  (std {r.std_seconds * 1000:6.1f} ms)"
        )
    slic = [r for r in rows if r.algorithm == "slic" and r.stage == "segment_only"]
    qs = [r for r in rows if r.algorithm == "quickshift"]
    if slic and qs:
        fastest_qs = min(r.mean_seconds for r in qs)
        ratio = fastest_qs / slic[0].mean_seconds
        out.append(
            f"slic segmentation is {ratio:.1f}x faster than the fastest "
            "quick shift configuration"
        )
    out.append("threads: 1 (kernels are sequential; timings are comparable)")
    return "\n".join(out)
