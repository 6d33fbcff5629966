"""Graph-based superpixel segmentation (Felzenszwalb & Huttenlocher).

Edge weights are the joint Euclidean RGB distance between 8-connected
neighbours, measured on the 0-255 scale so that ``k`` keeps its usual
meaning (``k = 300`` for the objectness setting).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

MIN_SEGMENT_SIDE = 8

# (dy, dx) in the order used for the stable edge tie-break.
NEIGHBOUR_OFFSETS = ((0, 1), (1, 0), (1, 1), (1, -1))


def as_image(img, min_side: int = 1) -> np.ndarray:
    """Validate an ``(H, W, 3)`` raster with values in ``[0, 1]``."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {arr.shape}")
    if arr.shape[0] < min_side or arr.shape[1] < min_side:
        raise ValueError(f"image {arr.shape[1]}x{arr.shape[0]} is smaller than "
                         f"{min_side}x{min_side}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains non-finite values")
    if arr.min(initial=0.0) < 0.0 or arr.max(initial=0.0) > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    return arr


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian truncated at radius ``ceil(4 * sigma)``."""
    radius = int(math.ceil(4.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_smooth(img, sigma: float) -> np.ndarray:
    """Separable Gaussian blur per channel with mirrored borders."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    arr = as_image(img)
    kernel = gaussian_kernel(sigma)
    out = ndimage.correlate1d(arr, kernel, axis=0, mode="reflect")
    out = ndimage.correlate1d(out, kernel, axis=1, mode="reflect")
    return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True)
class SuperpixelMap:
    labels: np.ndarray = field(repr=False)
    count: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64).copy()
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels.ravel(), minlength=self.count)


def grid_edges(smoothed: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """8-connected edges sorted by (weight, source pixel, direction).

    Returns ``(src, dst, weight)`` flat pixel indices and weights.
    """
    h, w, _ = smoothed.shape
    idx = np.arange(h * w).reshape(h, w)
    srcs, dsts, wts, dirs = [], [], [], []
    for d, (dy, dx) in enumerate(NEIGHBOUR_OFFSETS):
        ys = slice(0, h - dy)
        xs = slice(max(0, -dx), w - max(0, dx))
        yd = slice(dy, h)
        xd = slice(max(0, dx), w + min(0, dx))
        a = smoothed[ys, xs]
        b = smoothed[yd, xd]
        diff = a - b
        weight = np.sqrt(diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1]
                         + diff[..., 2] * diff[..., 2])
        srcs.append(idx[ys, xs].ravel())
        dsts.append(idx[yd, xd].ravel())
        wts.append(weight.ravel())
        dirs.append(np.full(weight.size, d))
    src = np.concatenate(srcs)
    dst = np.concatenate(dsts)
    wt = np.concatenate(wts)
    direction = np.concatenate(dirs)
    order = np.lexsort((direction, src, wt))
    return src[order], dst[order], wt[order]


class _DisjointSet:
    __slots__ = ("parent", "rank", "size")

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n
        self.size = [1] * n

    def find(self, x: int) -> int:
        parent = self.parent
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(self, a: int, b: int) -> int:
        if self.rank[a] < self.rank[b]:
            a, b = b, a
        self.parent[b] = a
        self.size[a] += self.size[b]
        if self.rank[a] == self.rank[b]:
            self.rank[a] += 1
        return a


def dense_relabel(roots: np.ndarray) -> tuple[np.ndarray, int]:
    """Relabel arbitrary component ids to 0..n-1 in raster first-seen order."""
    flat = roots.ravel()
    _, first, inverse = np.unique(flat, return_index=True, return_inverse=True)
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(first.size)
    return rank[inverse].reshape(roots.shape), int(first.size)


def segment(img, k: float = 300.0, sigma: float = 0.8, min_size: int = 20) -> SuperpixelMap:
    """Segment an image into superpixels.

    Components merge along ascending edges while the edge weight does not
    exceed ``min(Int(C1) + k/|C1|, Int(C2) + k/|C2|)``. A second pass over the
    same edge order absorbs components smaller than ``min_size`` pixels into
    the neighbour reached by their cheapest edge.
    """
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    if min_size < 1:
        raise ValueError(f"min_size must be >= 1, got {min_size}")
    arr = as_image(img, min_side=MIN_SEGMENT_SIDE)
    h, w, _ = arr.shape
    smoothed = gaussian_smooth(arr, sigma) * 255.0
    src, dst, wt = grid_edges(smoothed)
    src_l, dst_l, wt_l = src.tolist(), dst.tolist(), wt.tolist()

    ds = _DisjointSet(h * w)
    find, size = ds.find, ds.size
    threshold = [k] * (h * w)
    for a, b, weight in zip(src_l, dst_l, wt_l):
        ra, rb = find(a), find(b)
        if ra != rb and weight <= threshold[ra] and weight <= threshold[rb]:
            root = ds.union(ra, rb)
            threshold[root] = weight + k / size[root]

    for a, b in zip(src_l, dst_l):
        ra, rb = find(a), find(b)
        if ra != rb and (size[ra] < min_size or size[rb] < min_size):
            ds.union(ra, rb)

    roots = np.fromiter((find(p) for p in range(h * w)), dtype=np.int64, count=h * w)
    labels, count = dense_relabel(roots.reshape(h, w))
    return SuperpixelMap(labels=labels, count=count)


def colorize(spmap: SuperpixelMap, seed: int = 0) -> np.ndarray:
    """Random-colour rendering of a label map as ``uint8`` RGB, for debugging."""
    rng = np.random.default_rng(seed)
    palette = rng.integers(0, 256, size=(spmap.count, 3), dtype=np.uint8)
    return palette[spmap.labels]
