"""Superpixel partitioning: SLIC, quick shift, and connectivity enforcement.

Both algorithms work in the joint (x, y, R, G, B) space of an 8-bit RGB
frame. All tie-breaking rules are explicit so that identical inputs always
produce bit-identical label maps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit
from PIL import Image

from .core import Frame
from .errors import InvalidParam, NotFound, UnsupportedFormat

MAX_LABELS_PNG = 65535  # 16-bit label serialization limit


@dataclass
class SuperpixelMap:
    """Per-pixel labels in [0, k); every label occurs at least once."""

    labels: np.ndarray  # (H, W) int32
    k: int

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]


@dataclass
class SlicParams:
    n_superpixels: int = 100
    compactness: float = 10.0
    iterations: int = 10
    enforce_bounds: bool = True

    def __post_init__(self):
        if self.n_superpixels < 4:
            raise InvalidParam("n_superpixels must be >= 4")
        if self.compactness <= 0:
            raise InvalidParam("compactness must be > 0")
        if self.iterations < 1:
            raise InvalidParam("iterations must be >= 1")


@dataclass
class QsParams:
    kernel_size: float = 5.0
    max_dist: float = 10.0

    def __post_init__(self):
        if self.kernel_size <= 0:
            raise InvalidParam("kernel_size must be > 0")
        if self.max_dist <= 0:
            raise InvalidParam("max_dist must be > 0")


# ---------------------------------------------------------------------------
# SLIC
# ---------------------------------------------------------------------------


def _gradient_magnitude(img: np.ndarray) -> np.ndarray:
    """Squared RGB gradient |I(x+1,y)-I(x-1,y)|^2 + |I(x,y+1)-I(x,y-1)|^2."""
    h, w = img.shape[:2]
    xi = np.arange(w)
    yi = np.arange(h)
    dx = img[:, np.minimum(xi + 1, w - 1), :] - img[:, np.maximum(xi - 1, 0), :]
    dy = img[np.minimum(yi + 1, h - 1), :, :] - img[np.maximum(yi - 1, 0), :, :]
    return (dx.astype(np.float64) ** 2).sum(-1) + (dy.astype(np.float64) ** 2).sum(-1)


def _check_n(frame: Frame, n: int) -> None:
    limit = frame.width * frame.height // 16
    if not 4 <= n <= limit:
        raise InvalidParam(f"n_superpixels must be in [4, {limit}], got {n}")


def slic_init_centers(frame: Frame, n: int) -> np.ndarray:
    """Seed cluster centers on a regular grid, then move each one to the
    lowest-gradient position in its 3x3 neighborhood.

    Returns a (K, 5) float array of (x, y, R, G, B). Gradient ties keep the
    grid position; otherwise the smallest (y, x) among the minima wins.
    """
    _check_n(frame, n)
    h, w = frame.height, frame.width
    s = math.sqrt(w * h / n)
    nx = max(1, round(w / s))
    ny = max(1, round(h / s))
    grad = _gradient_magnitude(frame.pixels)

    centers = np.empty((nx * ny, 5), dtype=np.float64)
    k = 0
    for iy in range(ny):
        cy = int((iy + 0.5) * h / ny)
        for ix in range(nx):
            cx = int((ix + 0.5) * w / nx)
            y0, y1 = max(0, cy - 1), min(h - 1, cy + 1)
            x0, x1 = max(0, cx - 1), min(w - 1, cx + 1)
            window = grad[y0 : y1 + 1, x0 : x1 + 1]
            gmin = window.min()
            if grad[cy, cx] == gmin:
                by, bx = cy, cx
            else:
                ys, xs = np.nonzero(window == gmin)
                j = np.lexsort((xs, ys))[0]
                by, bx = y0 + ys[j], x0 + xs[j]
            centers[k] = (bx, by, *frame.pixels[by, bx].astype(np.float64))
            k += 1
    return centers


@njit(cache=True)
def _slic_assign(r, g, b, cx, cy, cr, cg, cb, half, inv_m2, inv_s2, labels, dist):
    h, w = r.shape
    for y in range(h):
        for x in range(w):
            labels[y, x] = -1
            dist[y, x] = np.inf
    for k in range(cx.shape[0]):
        x0 = max(0, int(math.floor(cx[k] - half)))
        x1 = min(w - 1, int(math.ceil(cx[k] + half)))
        y0 = max(0, int(math.floor(cy[k] - half)))
        y1 = min(h - 1, int(math.ceil(cy[k] + half)))
        for y in range(y0, y1 + 1):
            for x in range(x0, x1 + 1):
                dc = (
                    (r[y, x] - cr[k]) ** 2
                    + (g[y, x] - cg[k]) ** 2
                    + (b[y, x] - cb[k]) ** 2
                )
                dp = (x - cx[k]) ** 2 + (y - cy[k]) ** 2
                d2 = dc * inv_m2 + dp * inv_s2
                if d2 < dist[y, x]:
                    dist[y, x] = d2
                    labels[y, x] = k


@njit(cache=True)
def _slic_fill_unassigned(r, g, b, cx, cy, cr, cg, cb, inv_m2, inv_s2, labels):
    h, w = r.shape
    nk = cx.shape[0]
    for y in range(h):
        for x in range(w):
            if labels[y, x] >= 0:
                continue
            best = np.inf
            bk = 0
            for k in range(nk):
                dc = (
                    (r[y, x] - cr[k]) ** 2
                    + (g[y, x] - cg[k]) ** 2
                    + (b[y, x] - cb[k]) ** 2
                )
                dp = (x - cx[k]) ** 2 + (y - cy[k]) ** 2
                d2 = dc * inv_m2 + dp * inv_s2
                if d2 < best:
                    best = d2
                    bk = k
            labels[y, x] = bk


def slic_segment(frame: Frame, params: SlicParams) -> SuperpixelMap:
    """Localized k-means in (x, y, R, G, B) with a compactness-normalized
    distance: D^2 = (Dc/m)^2 + (Dp/S)^2, where S is the grid interval.

    Each center searches a 2Sx2S window; pixels take the argmin center with
    ties going to the lower center index; centers move to the mean of their
    members. Undersized fragments are merged afterwards when
    `enforce_bounds` is set.
    """
    _check_n(frame, params.n_superpixels)
    h, w = frame.height, frame.width
    s = math.sqrt(w * h / params.n_superpixels)

    img = frame.pixels.astype(np.float64)
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    centers = slic_init_centers(frame, params.n_superpixels)
    cx, cy = centers[:, 0].copy(), centers[:, 1].copy()
    cr, cg, cb = centers[:, 2].copy(), centers[:, 3].copy(), centers[:, 4].copy()

    inv_m2 = 1.0 / params.compactness**2
    inv_s2 = 1.0 / s**2
    labels = np.empty((h, w), dtype=np.int32)
    dist = np.empty((h, w), dtype=np.float64)
    xs = np.tile(np.arange(w, dtype=np.float64), h)
    ys = np.repeat(np.arange(h, dtype=np.float64), w)

    nk = centers.shape[0]
    for _ in range(params.iterations):
        _slic_assign(r, g, b, cx, cy, cr, cg, cb, s, inv_m2, inv_s2, labels, dist)
        _slic_fill_unassigned(r, g, b, cx, cy, cr, cg, cb, inv_m2, inv_s2, labels)
        flat = labels.ravel()
        cnt = np.bincount(flat, minlength=nk)
        nonzero = cnt > 0
        cnt_safe = np.where(nonzero, cnt, 1)
        for arr, target in (
            (xs, cx),
            (ys, cy),
            (r.ravel(), cr),
            (g.ravel(), cg),
            (b.ravel(), cb),
        ):
            mean = np.bincount(flat, weights=arr, minlength=nk) / cnt_safe
            target[nonzero] = mean[nonzero]

    labels, k = _compact_labels(labels)
    spmap = SuperpixelMap(labels=labels, k=k)
    if params.enforce_bounds:
        spmap = enforce_connectivity(spmap, w * h / params.n_superpixels)
    else:
        spmap = _split_disconnected(spmap)
    return spmap


# ---------------------------------------------------------------------------
# Connectivity / size-bound enforcement
# ---------------------------------------------------------------------------


@njit(cache=True)
def _cc_label(labels):
    """4-connected components of equal-valued pixels, ids in raster order."""
    h, w = labels.shape
    comp = np.full((h, w), -1, dtype=np.int32)
    stack = np.empty(h * w, dtype=np.int64)
    c = 0
    for ys in range(h):
        for xs in range(w):
            if comp[ys, xs] >= 0:
                continue
            lab = labels[ys, xs]
            comp[ys, xs] = c
            stack[0] = ys * w + xs
            top = 1
            while top > 0:
                top -= 1
                p = stack[top]
                y = p // w
                x = p - y * w
                if y > 0 and comp[y - 1, x] < 0 and labels[y - 1, x] == lab:
                    comp[y - 1, x] = c
                    stack[top] = p - w
                    top += 1
                if y + 1 < h and comp[y + 1, x] < 0 and labels[y + 1, x] == lab:
                    comp[y + 1, x] = c
                    stack[top] = p + w
                    top += 1
                if x > 0 and comp[y, x - 1] < 0 and labels[y, x - 1] == lab:
                    comp[y, x - 1] = c
                    stack[top] = p - 1
                    top += 1
                if x + 1 < w and comp[y, x + 1] < 0 and labels[y, x + 1] == lab:
                    comp[y, x + 1] = c
                    stack[top] = p + 1
                    top += 1
            c += 1
    return comp, c


def _compact_labels(arr: np.ndarray) -> tuple[np.ndarray, int]:
    """Renumber labels to [0, K) in order of first raster occurrence."""
    flat = arr.ravel()
    uniq, first = np.unique(flat, return_index=True)
    lut = np.empty(uniq.size, dtype=np.int32)
    lut[np.argsort(first, kind="stable")] = np.arange(uniq.size, dtype=np.int32)
    out = lut[np.searchsorted(uniq, flat)].reshape(arr.shape)
    return out, int(uniq.size)


def _boundary_pairs(comp: np.ndarray, ncomp: int):
    a = np.concatenate([comp[:, :-1].ravel(), comp[:-1, :].ravel()]).astype(np.int64)
    b = np.concatenate([comp[:, 1:].ravel(), comp[1:, :].ravel()]).astype(np.int64)
    m = a != b
    lo = np.minimum(a[m], b[m])
    hi = np.maximum(a[m], b[m])
    key, cnt = np.unique(lo * ncomp + hi, return_counts=True)
    return key // ncomp, key % ncomp, cnt


def _split_disconnected(spmap: SuperpixelMap) -> SuperpixelMap:
    """Give each disconnected fragment its own label, without merging."""
    comp, _ = _cc_label(np.ascontiguousarray(spmap.labels, dtype=np.int32))
    labels, k = _compact_labels(comp)
    return SuperpixelMap(labels=labels, k=k)


def enforce_connectivity(spmap: SuperpixelMap, target_size: float) -> SuperpixelMap:
    """Split disconnected labels, then absorb fragments smaller than
    target_size/2 into the adjacent region sharing the longest boundary
    (ties: lower label value, then lower fragment id). Labels are compacted
    to [0, K') in raster order of first occurrence.
    """
    if target_size <= 0:
        raise InvalidParam("target_size must be > 0")
    labels = np.ascontiguousarray(spmap.labels, dtype=np.int32)
    comp, ncomp = _cc_label(labels)
    threshold = target_size / 2.0

    sizes = np.bincount(comp.ravel(), minlength=ncomp).astype(np.int64)
    label_of = np.empty(ncomp, dtype=np.int64)
    label_of[comp.ravel()] = labels.ravel()

    adj: list[dict[int, int]] = [{} for _ in range(ncomp)]
    for a, b, cnt in zip(*_boundary_pairs(comp, ncomp)):
        adj[a][b] = int(cnt)
        adj[b][a] = int(cnt)

    parent = np.arange(ncomp, dtype=np.int64)

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return int(a)

    while True:
        merged_any = False
        for c in range(ncomp):
            if find(c) != c or sizes[c] >= threshold:
                continue
            agg: dict[int, int] = {}
            for nb, blen in adj[c].items():
                root = find(nb)
                if root != c:
                    agg[root] = agg.get(root, 0) + blen
            if not agg:
                continue  # region spans the whole image
            target = min(agg.items(), key=lambda kv: (-kv[1], label_of[kv[0]], kv[0]))[0]
            parent[c] = target
            sizes[target] += sizes[c]
            tadj = adj[target]
            for nb, blen in adj[c].items():
                root = find(nb)
                if root != target:
                    tadj[root] = tadj.get(root, 0) + blen
            adj[c] = {}
            merged_any = True
        if not merged_any:
            break

    roots = np.array([find(c) for c in range(ncomp)], dtype=np.int64)
    out, k = _compact_labels(roots[comp])
    return SuperpixelMap(labels=out, k=k)


# ---------------------------------------------------------------------------
# Quick shift
# ---------------------------------------------------------------------------


@njit(cache=True)
def _qs_density(r8, g8, b8, spatial_lut, color_lut, rwin):
    h, w = r8.shape
    dens = np.ones((h, w), dtype=np.float64)  # self term, exp(0)
    for dy in range(0, rwin + 1):
        dx0 = 1 if dy == 0 else -rwin
        for dx in range(dx0, rwin + 1):
            wsp = spatial_lut[dy, dx + rwin]
            xlo = max(0, -dx)
            xhi = min(w, w - dx)
            for y in range(0, h - dy):
                yy = y + dy
                for x in range(xlo, xhi):
                    xx = x + dx
                    dr = np.int64(r8[y, x]) - np.int64(r8[yy, xx])
                    dg = np.int64(g8[y, x]) - np.int64(g8[yy, xx])
                    db = np.int64(b8[y, x]) - np.int64(b8[yy, xx])
                    wgt = wsp * color_lut[dr * dr + dg * dg + db * db]
                    dens[y, x] += wgt
                    dens[yy, xx] += wgt
    return dens


# joint distances are integers (unit color ratio, integer pixel offsets),
# bounded by 2*511^2 + 3*255^2 < 2^20, so the search runs in int32
_QS_SENTINEL = np.int32(2**30)


@njit(cache=True)
def _qs_parents(r8, g8, b8, rank, tau):
    """Link each pixel to its nearest (joint distance) neighbor of higher
    density within tau; `rank` already encodes the density order with ties
    broken toward the lower linear index, so "higher" is one int compare.
    Distance ties resolve to the lower index (the window is scanned in
    ascending linear order and only strict improvements win). Roots point
    to themselves.

    Each pixel scans its full tau-radius window, so the cost grows with
    max_dist until the window covers the frame. The row phase is branchless
    integer math so that it vectorizes.
    """
    h, w = r8.shape
    parent = np.empty(h * w, dtype=np.int64)
    rt = min(int(math.floor(tau)), max(h, w) - 1)
    t2 = np.int32(min(math.floor(tau * tau), 2.0**31 - 1))
    big = _QS_SENTINEL
    dx2 = np.empty(w, dtype=np.int32)
    for y in range(h):
        y0 = max(0, y - rt)
        y1 = min(h - 1, y + rt)
        for x in range(w):
            rk = rank[y, x]
            ri = np.int32(r8[y, x])
            gi = np.int32(g8[y, x])
            bi = np.int32(b8[y, x])
            x0 = max(0, x - rt)
            x1 = min(w - 1, x + rt)
            for xx in range(x0, x1 + 1):
                d = np.int32(xx - x)
                dx2[xx] = d * d
            best = big
            bj = np.int64(-1)
            for yy in range(y0, y1 + 1):
                dy = np.int32(yy - y)
                dy2 = dy * dy
                rrow = r8[yy]
                grow = g8[yy]
                brow = b8[yy]
                krow = rank[yy]
                rmin = big
                for xx in range(x0, x1 + 1):
                    dr = np.int32(rrow[xx]) - ri
                    dg = np.int32(grow[xx]) - gi
                    db = np.int32(brow[xx]) - bi
                    d2 = dy2 + dx2[xx] + dr * dr + dg * dg + db * db
                    ok = (krow[xx] > rk) & (d2 <= t2)
                    v = d2 if ok else big
                    rmin = v if v < rmin else rmin
                if rmin < best:  # rare: rescan the row for the first minimum
                    best = rmin
                    for xx in range(x0, x1 + 1):
                        dr = np.int32(rrow[xx]) - ri
                        dg = np.int32(grow[xx]) - gi
                        db = np.int32(brow[xx]) - bi
                        d2 = dy2 + dx2[xx] + dr * dr + dg * dg + db * db
                        if d2 == rmin and krow[xx] > rk:
                            bj = yy * w + xx
                            break
            parent[y * w + x] = bj if bj >= 0 else y * w + x
    return parent


def _density_rank(dens: np.ndarray) -> np.ndarray:
    """int32 rank per pixel: rank[j] > rank[i] iff density[j] > density[i],
    with exact density ties counting the lower linear index as higher."""
    flat = dens.ravel()
    idx = np.arange(flat.size)
    order = np.lexsort((-idx, flat))  # ascending density, descending index
    rank = np.empty(flat.size, dtype=np.int32)
    rank[order] = np.arange(flat.size, dtype=np.int32)
    return rank.reshape(dens.shape)


@njit(cache=True)
def _resolve_roots(parent):
    n = parent.shape[0]
    for i in range(n):
        j = i
        while parent[j] != j:
            j = parent[j]
        k = i
        while parent[k] != j:  # path compression
            nxt = parent[k]
            parent[k] = j
            k = nxt
    return parent


def quickshift_segment(frame: Frame, params: QsParams) -> SuperpixelMap:
    """Mode-seeking segmentation over the joint (x, y, R, G, B) space with
    color and position equally weighted.

    Parzen density uses a Gaussian kernel of bandwidth `kernel_size`
    sampled in a window of half-width 3*kernel_size; link trees rooted at
    local density modes define the segments.
    """
    sigma = params.kernel_size
    rwin = int(math.ceil(3.0 * sigma))
    inv2s2 = 0.5 / sigma**2

    dxs = np.arange(-rwin, rwin + 1, dtype=np.float64)
    dys = np.arange(0, rwin + 1, dtype=np.float64)
    spatial_lut = np.exp(-(dys[:, None] ** 2 + dxs[None, :] ** 2) * inv2s2)
    c2 = np.arange(3 * 255**2 + 1, dtype=np.float64)
    color_lut = np.exp(-c2 * inv2s2)

    px = frame.pixels
    r8 = np.ascontiguousarray(px[..., 0])
    g8 = np.ascontiguousarray(px[..., 1])
    b8 = np.ascontiguousarray(px[..., 2])

    dens = _qs_density(r8, g8, b8, spatial_lut, color_lut, rwin)
    parent = _qs_parents(r8, g8, b8, _density_rank(dens), float(params.max_dist))
    roots = _resolve_roots(parent)
    labels, k = _compact_labels(roots.reshape(frame.height, frame.width))
    return SuperpixelMap(labels=labels, k=k)


# ---------------------------------------------------------------------------
# Serialization: 16-bit label PNG plus a `K=<count>` sidecar
# ---------------------------------------------------------------------------


def _sidecar_path(path) -> Path:
    return Path(str(path) + ".k")


def save_superpixel_map(spmap: SuperpixelMap, path) -> None:
    if spmap.k > MAX_LABELS_PNG:
        raise InvalidParam(
            f"cannot serialize {spmap.k} labels into a 16-bit PNG"
        )
    Image.fromarray(spmap.labels.astype(np.uint16)).save(path, format="PNG")
    _sidecar_path(path).write_text(f"K={spmap.k}\n", encoding="utf-8")


def load_superpixel_map(path) -> SuperpixelMap:
    path = Path(path)
    sidecar = _sidecar_path(path)
    if not path.exists() or not sidecar.exists():
        raise NotFound(f"{path} (+ sidecar {sidecar.name})")
    text = sidecar.read_text(encoding="utf-8").strip()
    if not text.startswith("K="):
        raise UnsupportedFormat(f"{sidecar}: malformed sidecar")
    k = int(text[2:])
    labels = np.array(Image.open(path), dtype=np.int32)
    if labels.ndim != 2 or labels.max() >= k or labels.min() < 0:
        raise UnsupportedFormat(f"{path}: labels do not match sidecar K={k}")
    return SuperpixelMap(labels=labels, k=k)
