"""Laplacian-score feature ranking.

Features that respect the local structure of the sample-similarity graph
score low; ranking keeps the `keep` lowest-scoring features. Scores are
computed on internally standardized columns, so they are invariant to
affine rescaling of any single feature.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGraph, InvalidParam, TooFewSamples


@dataclass
class ScorerParams:
    k_neighbors: int = 5
    heat_t: float | None = None  # None: mean squared k-NN distance
    keep: int = 20

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise InvalidParam("k_neighbors must be >= 1")
        if self.keep < 1:
            raise InvalidParam("keep must be >= 1")
        if self.heat_t is not None and self.heat_t <= 0:
            raise InvalidParam("heat_t must be > 0 or None for auto")


@dataclass
class FeatureRanking:
    scores: np.ndarray  # (d,)
    selected: np.ndarray  # (keep,) indices ordered by ascending score


def laplacian_scores(x: np.ndarray, params: ScorerParams) -> np.ndarray:
    """Laplacian score per feature column (lower = more structure-preserving).

    Builds a symmetric k-NN graph over rows with heat-kernel weights
    w_ij = exp(-|x_i - x_j|^2 / t); for each standardized feature f,
    the score is (f~' L f~) / (f~' D f~) with f~ the D-weighted centering
    of f. Constant columns score +inf.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise InvalidParam("feature matrix must be 2-D")
    n, d = x.shape
    if n < params.k_neighbors + 1:
        raise TooFewSamples(
            f"need at least k_neighbors+1={params.k_neighbors + 1} rows, got {n}"
        )

    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    constant = sd == 0
    sd_safe = np.where(constant, 1.0, sd)
    z = (x - mu) / sd_safe

    sq = (z * z).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (z @ z.T)
    np.clip(d2, 0.0, None, out=d2)
    np.fill_diagonal(d2, np.inf)

    k = params.k_neighbors
    order = np.argsort(d2, axis=1, kind="stable")[:, :k]
    knn_d2 = np.take_along_axis(d2, order, axis=1)
    t = params.heat_t if params.heat_t is not None else float(knn_d2.mean())
    if t <= 0:  # all rows identical
        raise DegenerateGraph("zero heat parameter: all samples coincide")

    w = np.zeros((n, n))
    rows = np.repeat(np.arange(n), k)
    cols = order.ravel()
    w[rows, cols] = np.exp(-d2[rows, cols] / t)
    w = np.maximum(w, w.T)  # symmetric union of directed k-NN edges
    if not np.any(w > 0):
        raise DegenerateGraph("all affinity weights underflowed to zero")

    deg = w.sum(axis=1)
    total = deg.sum()
    scores = np.empty(d)
    for r in range(d):
        f = z[:, r]
        ftilde = f - (f @ deg) / total
        num = ftilde @ (deg * ftilde) - ftilde @ (w @ ftilde)  # f' (D - W) f
        den = ftilde @ (deg * ftilde)
        scores[r] = num / den if den > 0 else np.inf
    scores[constant] = np.inf
    return scores


def select_features(scores: np.ndarray, keep: int) -> FeatureRanking:
    """Indices of the `keep` smallest scores, ties broken by lower index."""
    scores = np.asarray(scores, dtype=np.float64)
    if not 1 <= keep <= scores.size:
        raise InvalidParam(f"keep must be in [1, {scores.size}], got {keep}")
    selected = np.argsort(scores, kind="stable")[:keep]
    return FeatureRanking(scores=scores, selected=selected.astype(np.int64))


def save_ranking(path, ranking: FeatureRanking) -> None:
    chosen = set(int(i) for i in ranking.selected)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature_index", "score", "selected"])
        for i, s in enumerate(ranking.scores):
            writer.writerow([i, repr(float(s)), int(i in chosen)])
