"""Proposal generators standing in for Selective Search."""

from __future__ import annotations

import math

import numpy as np

from ..geometry import ProposalSet, iou_matrix
from ..segmentation import SuperpixelMap, segment

GRID_SCALES = (18, 26, 38)
GRID_RATIOS = (0.6, 1.0, 1.66)
GRID_STRIDE = (9, 13, 19)  # half the scale
# Finer than the straddling segmentation so objects split into parts.
SEGMENT_PARAMS = {"k": 100.0, "sigma": 0.8, "min_size": 15}


def window_size(scale: float, ratio: float) -> tuple[int, int]:
    """Integer ``(w, h)`` of a window with area ``scale**2`` and ``w / h = ratio``."""
    return int(round(scale * math.sqrt(ratio))), int(round(scale / math.sqrt(ratio)))


def _strides(scales, stride) -> tuple[int, ...]:
    if isinstance(stride, (int, np.integer)):
        return (int(stride),) * len(scales)
    stride = tuple(int(v) for v in stride)
    if len(stride) != len(scales):
        raise ValueError("need one stride per scale")
    return stride


def grid_count(width: int, height: int, scales=GRID_SCALES, ratios=GRID_RATIOS,
               stride=GRID_STRIDE) -> int:
    """Closed-form number of grid windows.

    ``stride`` is a single step or one step per scale.
    """
    total = 0
    for s, stride in zip(scales, _strides(scales, stride)):
        for r in ratios:
            w, h = window_size(s, r)
            if w <= width and h <= height:
                total += ((width - w) // stride + 1) * ((height - h) // stride + 1)
    return total


def grid_proposals(image_id: str, width: int, height: int, scales=GRID_SCALES,
                   ratios=GRID_RATIOS, stride=GRID_STRIDE) -> ProposalSet:
    """Multi-scale sliding windows anchored at the top-left corner."""
    boxes = []
    for s, stride in zip(scales, _strides(scales, stride)):
        for r in ratios:
            w, h = window_size(s, r)
            if w > width or h > height:
                continue
            for y in range(0, height - h + 1, stride):
                for x in range(0, width - w + 1, stride):
                    boxes.append((x, y, x + w, y + h))
    return ProposalSet(image_id, np.asarray(boxes, dtype=np.float64))


def segment_proposals(image_id: str, spmap: SuperpixelMap, max_pairs: int = 400) -> ProposalSet:
    """Bounding boxes of superpixels and of adjacent superpixel pairs."""
    labels = spmap.labels
    h, w = labels.shape
    ys, xs = np.mgrid[0:h, 0:w]
    flat = labels.ravel()
    n = spmap.count
    x1 = np.full(n, w)
    y1 = np.full(n, h)
    x2 = np.zeros(n, dtype=np.int64)
    y2 = np.zeros(n, dtype=np.int64)
    np.minimum.at(x1, flat, xs.ravel())
    np.minimum.at(y1, flat, ys.ravel())
    np.maximum.at(x2, flat, xs.ravel() + 1)
    np.maximum.at(y2, flat, ys.ravel() + 1)
    seg_boxes = np.stack([x1, y1, x2, y2], axis=1)

    pairs = set()
    for a, b in ((labels[:, :-1], labels[:, 1:]), (labels[:-1, :], labels[1:, :])):
        m = a != b
        for i, j in zip(a[m].tolist(), b[m].tolist()):
            pairs.add((min(i, j), max(i, j)))
    pair_boxes = [
        (min(x1[i], x1[j]), min(y1[i], y1[j]), max(x2[i], x2[j]), max(y2[i], y2[j]))
        for i, j in sorted(pairs)[:max_pairs]
    ]
    boxes = np.concatenate([seg_boxes, np.asarray(pair_boxes, dtype=np.int64).reshape(-1, 4)])
    _, first = np.unique(boxes, axis=0, return_index=True)
    boxes = boxes[np.sort(first)]
    boxes = boxes[(boxes[:, 2] > boxes[:, 0]) & (boxes[:, 3] > boxes[:, 1])]
    return ProposalSet(image_id, boxes.astype(np.float64))


def propose(scene, mode: str = "grid", proposals_by_id: dict | None = None, **kwargs) -> ProposalSet:
    """Proposals for one scene in ``grid``, ``segments`` or ``file`` mode.

    ``file`` mode looks the scene up in ``proposals_by_id`` (as returned by
    :func:`objdistill.formats.read_proposals`).
    """
    if mode == "grid":
        return grid_proposals(scene.image_id, scene.width, scene.height, **kwargs)
    if mode == "segments":
        return segment_proposals(scene.image_id, segment(scene.image, **{**SEGMENT_PARAMS, **kwargs}))
    if mode == "file":
        if proposals_by_id is None or scene.image_id not in proposals_by_id:
            raise KeyError(f"no proposals for image {scene.image_id!r}")
        return proposals_by_id[scene.image_id]
    raise ValueError(f"unknown proposal mode {mode!r}")


def recall(proposals: ProposalSet, gt_boxes: np.ndarray, threshold: float = 0.5) -> float:
    """Fraction of ground-truth boxes covered by some proposal above ``threshold`` IoU."""
    if len(gt_boxes) == 0:
        return 1.0
    best = iou_matrix(gt_boxes, proposals.boxes).max(axis=1)
    return float(np.mean(best > threshold))
