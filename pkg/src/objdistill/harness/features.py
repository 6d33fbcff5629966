"""Handcrafted region descriptors replacing a CNN RoI head.

Each proposal gets a fixed 76-value vector:

* 64-bin (4x4x4) colour histogram of the box, L1-normalized;
* 8 edge densities: 4 nested bands inside the box and 4 rings around it;
* 4 geometry values: centre and size relative to the image.
"""

from __future__ import annotations

import numpy as np

from ..evidence import (color_bin_codes, edge_map, integral_image, rect_area,
                        rect_sums, scaled_rects)
from ..geometry import ProposalSet, to_pixel_rects

HIST_BINS = 4
INNER_FACTORS = (1.0, 0.8, 0.6, 0.4, 0.2)
OUTER_FACTORS = (1.0, 1.2, 1.4, 1.6, 1.8)
FEATURE_DIM = HIST_BINS ** 3 + 8 + 4


class FeatureExtractor:
    """Integral tables of one image, reused for every box."""

    def __init__(self, img: np.ndarray, edges: np.ndarray | None = None):
        self.height, self.width = img.shape[:2]
        codes = color_bin_codes(img, HIST_BINS)
        onehot = codes[None, :, :] == np.arange(HIST_BINS ** 3)[:, None, None]
        self.hist_integral = integral_image(onehot.astype(np.uint8))
        self.edges = edge_map(img) if edges is None else edges
        self.edge_integral = integral_image(self.edges.astype(np.uint8))

    def _band_density(self, outer: np.ndarray, inner: np.ndarray) -> np.ndarray:
        count = rect_sums(self.edge_integral, outer) - rect_sums(self.edge_integral, inner)
        area = rect_area(outer) - rect_area(inner)
        return np.where(area > 0, count / np.maximum(area, 1), 0.0)

    def __call__(self, boxes: np.ndarray) -> np.ndarray:
        rects = to_pixel_rects(boxes, self.width, self.height)
        counts = rect_sums(self.hist_integral, rects).T.astype(np.float64)
        hist = counts / np.maximum(counts.sum(axis=1, keepdims=True), 1.0)

        def scaled(f):
            return scaled_rects(rects, f, self.width, self.height)

        inner = [scaled(f) for f in INNER_FACTORS]
        outer = [scaled(f) for f in OUTER_FACTORS]
        bands = [self._band_density(inner[i], inner[i + 1]) for i in range(4)]
        rings = [self._band_density(outer[i + 1], outer[i]) for i in range(4)]

        b = np.asarray(boxes, dtype=np.float64)
        geom = np.stack([
            0.5 * (b[:, 0] + b[:, 2]) / self.width,
            0.5 * (b[:, 1] + b[:, 3]) / self.height,
            (b[:, 2] - b[:, 0]) / self.width,
            (b[:, 3] - b[:, 1]) / self.height,
        ], axis=1)
        return np.concatenate([hist, np.stack(bands + rings, axis=1), geom], axis=1)


def region_features(img: np.ndarray, proposals: ProposalSet) -> np.ndarray:
    """``(R, 76)`` descriptors for every proposal of ``img``."""
    return FeatureExtractor(img)(proposals.boxes)
