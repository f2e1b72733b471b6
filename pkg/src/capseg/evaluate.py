"""Pixel-level confusion counting, the four ratio measures, and report
aggregation in the layout of the per-disease results table.

Aggregation is micro-averaged: confusion counts are pooled within each
(scope, N) cell before the ratios are computed, which makes grouping of
frames associative.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .core import Frame, Mask
from .errors import DimensionMismatch, EmptyConfusion, EmptyInput
from .features import SuperpixelLabels
from .superpixel import SuperpixelMap

TOTAL_SCOPE = "total"


@dataclass
class PixelConfusion:
    tp: int = 0
    fn: int = 0
    tn: int = 0
    fp: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.tn + self.fp

    def __add__(self, other: "PixelConfusion") -> "PixelConfusion":
        return PixelConfusion(
            self.tp + other.tp,
            self.fn + other.fn,
            self.tn + other.tn,
            self.fp + other.fp,
        )


@dataclass
class Measures:
    sensitivity: float | None
    specificity: float | None
    accuracy: float | None
    precision: float | None


@dataclass
class Report:
    rows: dict  # (scope, n) -> (PixelConfusion, Measures)
    metadata: dict = field(default_factory=dict)


def pixel_confusion(
    predicted: SuperpixelLabels | np.ndarray, spmap: SuperpixelMap, mask: Mask
) -> PixelConfusion:
    """Broadcast per-superpixel labels to pixels and count against the mask."""
    labels = predicted.labels if isinstance(predicted, SuperpixelLabels) else predicted
    labels = np.asarray(labels)
    if labels.shape[0] != spmap.k:
        raise DimensionMismatch(
            f"{labels.shape[0]} labels for {spmap.k} superpixels"
        )
    if mask.values.shape != spmap.labels.shape:
        raise DimensionMismatch("mask and superpixel map dimensions differ")
    pred = labels.astype(bool)[spmap.labels]
    truth = mask.values.astype(bool)
    return PixelConfusion(
        tp=int(np.count_nonzero(pred & truth)),
        fn=int(np.count_nonzero(~pred & truth)),
        tn=int(np.count_nonzero(~pred & ~truth)),
        fp=int(np.count_nonzero(pred & ~truth)),
    )


def measures(conf: PixelConfusion) -> Measures:
    """Sensitivity, specificity, accuracy, precision; None on a zero
    denominator (rendered as NA, excluded from pooling)."""
    if conf.total <= 0:
        raise EmptyConfusion("confusion counts are all zero")

    def ratio(num: int, den: int) -> float | None:
        return num / den if den > 0 else None

    return Measures(
        sensitivity=ratio(conf.tp, conf.tp + conf.fn),
        specificity=ratio(conf.tn, conf.tn + conf.fp),
        accuracy=ratio(conf.tp + conf.tn, conf.total),
        precision=ratio(conf.tp, conf.tp + conf.fp),
    )


def aggregate(frame_results) -> Report:
    """Pool (disease, N, confusion) entries into micro-averaged report rows.

    Every entry contributes to the `total` row of its N; per-disease rows
    cover each disease present in the input.
    """
    entries = list(frame_results)
    if not entries:
        raise EmptyInput("no frame results to aggregate")
    cells: dict[tuple[str, int], PixelConfusion] = {}
    for disease, n, conf in entries:
        for scope in (TOTAL_SCOPE, disease):
            key = (scope, int(n))
            cells[key] = cells.get(key, PixelConfusion()) + conf
    rows = {key: (conf, measures(conf)) for key, conf in cells.items()}
    return Report(rows=rows)


def _fmt(value: float | None) -> str:
    return "NA" if value is None else f"{value:.6f}"


def report_to_csv(report: Report) -> str:
    """Deterministic CSV: total rows first, then diseases alphabetically,
    N ascending within each scope."""
    lines = ["scope,N,sensitivity,specificity,accuracy,precision"]
    keys = sorted(
        report.rows, key=lambda k: (k[0] != TOTAL_SCOPE, k[0], k[1])
    )
    for scope, n in keys:
        _, m = report.rows[(scope, n)]
        lines.append(
            f"{scope},{n},{_fmt(m.sensitivity)},{_fmt(m.specificity)},"
            f"{_fmt(m.accuracy)},{_fmt(m.precision)}"
        )
    return "\n".join(lines) + "\n"


def metadata_to_json(report: Report) -> str:
    return json.dumps(report.metadata, indent=2, sort_keys=True) + "\n"


def write_overlay(
    frame: Frame,
    spmap: SuperpixelMap,
    predicted: SuperpixelLabels | np.ndarray,
    path,
    tint=(255, 32, 32),
    alpha: float = 0.45,
) -> None:
    """Save the frame with predicted-abnormal regions tinted and superpixel
    boundaries drawn."""
    labels = predicted.labels if isinstance(predicted, SuperpixelLabels) else predicted
    pred = np.asarray(labels).astype(bool)[spmap.labels]
    img = frame.pixels.astype(np.float64)
    img[pred] = (1.0 - alpha) * img[pred] + alpha * np.array(tint, dtype=np.float64)

    lab = spmap.labels
    boundary = np.zeros(lab.shape, dtype=bool)
    boundary[:, :-1] |= lab[:, :-1] != lab[:, 1:]
    boundary[:-1, :] |= lab[:-1, :] != lab[1:, :]
    img[boundary] = (32, 255, 64)

    Image.fromarray(np.clip(np.rint(img), 0, 255).astype(np.uint8)).save(path)
