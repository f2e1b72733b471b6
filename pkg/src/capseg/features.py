"""Texture/color features per superpixel: LBP, uniform LBP, and the five
statistical measures (mean, variance, skewness, kurtosis, entropy) over
seven channels, giving 35 features per superpixel.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .core import ChannelStack, Frame, Mask, derive_channels
from .errors import DimensionMismatch, ImageTooSmall, InvalidParam, NotFound
from .superpixel import SuperpixelMap

# (channel, measure) layout of the 35-column feature matrix
CHANNEL_ORDER = ("gray", "lbp", "ulbp", "hue", "red", "green", "blue")
MEASURE_ORDER = ("mean", "variance", "skewness", "kurtosis", "entropy")
N_FEATURES = len(CHANNEL_ORDER) * len(MEASURE_ORDER)

FEATURE_NAMES = tuple(f"{c}_{m}" for c in CHANNEL_ORDER for m in MEASURE_ORDER)

# coordinates within this distance of an integer snap onto the grid, so the
# four axis-aligned neighbors are sampled exactly
_SNAP_EPS = 1e-8


@dataclass
class LbpParams:
    neighbors: int = 8
    radius: float = 1.0

    def __post_init__(self):
        if not 4 <= self.neighbors <= 24:
            raise InvalidParam("neighbors must be in [4, 24]")
        if self.radius < 1:
            raise InvalidParam("radius must be >= 1")


@dataclass
class CodeMap:
    codes: np.ndarray  # (H, W) int32
    kind: str  # "lbp" | "uniform_lbp"
    n_bins: int

    @property
    def height(self) -> int:
        return self.codes.shape[0]

    @property
    def width(self) -> int:
        return self.codes.shape[1]


@dataclass
class SuperpixelLabels:
    labels: np.ndarray  # (K,) uint8, 1 = abnormal
    overlap: np.ndarray  # (K,) float64 in [0, 1]


def _neighbor_offsets(params: LbpParams) -> list[tuple[float, float]]:
    """(dx, dy) sample offsets, p = 0..P-1, at angle 2*pi*p/P on the circle
    of the given radius; the y axis points down, so sin enters negated."""
    offs = []
    for p in range(params.neighbors):
        ang = 2.0 * np.pi * p / params.neighbors
        dx = params.radius * np.cos(ang)
        dy = -params.radius * np.sin(ang)
        if abs(dx - round(dx)) < _SNAP_EPS:
            dx = float(round(dx))
        if abs(dy - round(dy)) < _SNAP_EPS:
            dy = float(round(dy))
        offs.append((dx, dy))
    return offs


def lbp_map(gray: np.ndarray, params: LbpParams) -> CodeMap:
    """Per-pixel LBP codes: bit p is set when the p-th circular neighbor
    (bilinearly sampled, replicate-padded at borders) is >= the center.
    """
    gray = np.asarray(gray)
    if gray.ndim != 2:
        raise InvalidParam("gray raster must be 2-D")
    need = 2 * params.radius + 1
    if gray.shape[0] < need or gray.shape[1] < need:
        raise ImageTooSmall(
            f"raster {gray.shape[1]}x{gray.shape[0]} too small for radius "
            f"{params.radius}"
        )
    h, w = gray.shape
    g = gray.astype(np.float64)
    ys = np.arange(h, dtype=np.float64)[:, None]
    xs = np.arange(w, dtype=np.float64)[None, :]

    codes = np.zeros((h, w), dtype=np.int32)
    for p, (dx, dy) in enumerate(_neighbor_offsets(params)):
        sx = np.clip(xs + dx, 0.0, w - 1.0)
        sy = np.clip(ys + dy, 0.0, h - 1.0)
        x0 = np.floor(sx).astype(np.intp)
        y0 = np.floor(sy).astype(np.intp)
        x1 = np.minimum(x0 + 1, w - 1)
        y1 = np.minimum(y0 + 1, h - 1)
        fx = sx - x0
        fy = sy - y0
        # lerp form stays exact when corner values coincide
        top = g[y0, x0] + fx * (g[y0, x1] - g[y0, x0])
        bottom = g[y1, x0] + fx * (g[y1, x1] - g[y1, x0])
        sample = top + fy * (bottom - top)
        codes |= (sample >= g).astype(np.int32) << p
    return CodeMap(codes=codes, kind="lbp", n_bins=2**params.neighbors)


@lru_cache(maxsize=8)
def uniform_bin_table(neighbors: int) -> np.ndarray:
    """Map each P-bit code to a bin: uniform codes (at most two circular
    0/1 transitions) get their own bin in ascending code order; everything
    else shares the last bin. P(P-1)+2 uniform codes, P(P-1)+3 bins.
    """
    codes = np.arange(2**neighbors, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(neighbors)) & 1
    transitions = (bits != np.roll(bits, -1, axis=1)).sum(axis=1)
    uniform = transitions <= 2
    table = np.full(codes.size, uniform.sum(), dtype=np.int32)
    table[uniform] = np.arange(uniform.sum(), dtype=np.int32)
    return table


def uniform_from_lbp(codemap: CodeMap, params: LbpParams) -> CodeMap:
    if codemap.kind != "lbp":
        raise InvalidParam("expected a raw lbp code map")
    table = uniform_bin_table(params.neighbors)
    n_bins = params.neighbors * (params.neighbors - 1) + 3
    return CodeMap(codes=table[codemap.codes], kind="uniform_lbp", n_bins=n_bins)


def uniform_lbp_map(gray: np.ndarray, params: LbpParams) -> CodeMap:
    return uniform_from_lbp(lbp_map(gray, params), params)


def channel_moments(
    channel: np.ndarray, spmap: SuperpixelMap, levels: int = 256
) -> np.ndarray:
    """Per-superpixel (mean, population variance, skewness, kurtosis,
    entropy) of an integer-valued raster.

    Entropy uses a 256-bin histogram over [0, levels); when levels exceeds
    256 the values are scaled down into the 256 bins. Zero-variance regions
    report skewness 0 and kurtosis 0.
    """
    channel = np.asarray(channel)
    if channel.shape != spmap.labels.shape:
        raise DimensionMismatch(
            f"channel {channel.shape} vs map {spmap.labels.shape}"
        )
    lab = spmap.labels.ravel()
    v = channel.ravel().astype(np.float64)
    k = spmap.k

    n = np.bincount(lab, minlength=k).astype(np.float64)
    mean = np.bincount(lab, weights=v, minlength=k) / n
    d = v - mean[lab]
    m2 = np.bincount(lab, weights=d * d, minlength=k) / n
    m3 = np.bincount(lab, weights=d * d * d, minlength=k) / n
    m4 = np.bincount(lab, weights=d * d * d * d, minlength=k) / n
    pos = m2 > 0
    skew = np.zeros(k)
    kurt = np.zeros(k)
    skew[pos] = m3[pos] / m2[pos] ** 1.5
    kurt[pos] = m4[pos] / m2[pos] ** 2

    vi = channel.ravel().astype(np.int64)
    if levels > 256:
        vi = vi * 256 // levels
    counts = np.bincount(lab.astype(np.int64) * 256 + vi, minlength=k * 256)
    p = counts.reshape(k, 256) / n[:, None]
    logp = np.ones_like(p)
    np.log2(p, out=logp, where=p > 0)  # p log p -> 0 at p == 0
    entropy = -(p * logp).sum(axis=1)

    return np.column_stack([mean, m2, skew, kurt, entropy])


def extract_features(
    frame: Frame, spmap: SuperpixelMap, lbp_params: LbpParams | None = None
) -> np.ndarray:
    """K x 35 feature matrix: the five measures over gray, lbp, ulbp, hue,
    red, green, blue, in that channel-major order."""
    if (frame.height, frame.width) != spmap.labels.shape:
        raise DimensionMismatch("frame and superpixel map dimensions differ")
    lbp_params = lbp_params or LbpParams()
    stack: ChannelStack = derive_channels(frame)
    lbp = lbp_map(stack.gray, lbp_params)
    ulbp = uniform_from_lbp(lbp, lbp_params)

    channels = {
        "gray": (stack.gray, 256),
        "lbp": (lbp.codes, lbp.n_bins),
        "ulbp": (ulbp.codes, max(256, ulbp.n_bins)),
        "hue": (stack.hue, 256),
        "red": (stack.red, 256),
        "green": (stack.green, 256),
        "blue": (stack.blue, 256),
    }
    blocks = [
        channel_moments(channels[name][0], spmap, levels=channels[name][1])
        for name in CHANNEL_ORDER
    ]
    return np.hstack(blocks)


def label_superpixels(
    spmap: SuperpixelMap, mask: Mask, threshold: float = 0.5
) -> SuperpixelLabels:
    """Label a superpixel abnormal when at least `threshold` of its pixels
    fall inside the mask."""
    if mask.values.shape != spmap.labels.shape:
        raise DimensionMismatch("mask and superpixel map dimensions differ")
    if not 0 < threshold <= 1:
        raise InvalidParam("threshold must be in (0, 1]")
    lab = spmap.labels.ravel()
    n = np.bincount(lab, minlength=spmap.k).astype(np.float64)
    inside = np.bincount(lab, weights=mask.values.ravel(), minlength=spmap.k)
    overlap = inside / n
    return SuperpixelLabels(
        labels=(overlap >= threshold).astype(np.uint8), overlap=overlap
    )


# ---------------------------------------------------------------------------
# Feature CSV interchange: label,overlap,f00..f34
# ---------------------------------------------------------------------------


def save_features(
    path,
    features: np.ndarray,
    labels: np.ndarray | None = None,
    overlap: np.ndarray | None = None,
) -> None:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != N_FEATURES:
        raise InvalidParam(f"feature matrix must have {N_FEATURES} columns")
    k = features.shape[0]
    labels = np.zeros(k, dtype=np.uint8) if labels is None else np.asarray(labels)
    overlap = np.zeros(k) if overlap is None else np.asarray(overlap)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["label", "overlap"] + [f"f{i:02d}" for i in range(N_FEATURES)]
        )
        for i in range(k):
            writer.writerow(
                [int(labels[i]), repr(float(overlap[i]))]
                + [repr(float(x)) for x in features[i]]
            )


def load_features(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (features KxN_FEATURES, labels K, overlap K)."""
    path = Path(path)
    if not path.exists():
        raise NotFound(str(path))
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = ["label", "overlap"] + [f"f{i:02d}" for i in range(N_FEATURES)]
        if header != expected:
            raise InvalidParam(f"{path}: unexpected feature CSV header")
        rows = list(reader)
    labels = np.array([int(r[0]) for r in rows], dtype=np.uint8)
    overlap = np.array([float(r[1]) for r in rows], dtype=np.float64)
    feats = np.array(
        [[float(x) for x in r[2:]] for r in rows], dtype=np.float64
    ).reshape(len(rows), N_FEATURES)
    return feats, labels, overlap
