"""Axis-aligned box arithmetic, IoU and greedy NMS.

Boxes use the inclusive-exclusive pixel convention: ``(x1, y1, x2, y2)``
covers ``[x1, x2) x [y1, y2)`` so the area is exactly ``(x2 - x1) * (y2 - y1)``.
Array functions operate on ``(N, 4)`` float arrays in that layout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class DegenerateBoxError(ValueError):
    """Raised when a box has non-positive width or height."""


@dataclass(frozen=True)
class BoundingBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(c) for c in coords):
            raise DegenerateBoxError(f"non-finite box coordinates {coords}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise DegenerateBoxError(f"box has no area: {coords}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=np.float64)

    @classmethod
    def from_sequence(cls, values: Sequence[float]) -> "BoundingBox":
        x1, y1, x2, y2 = (float(v) for v in values)
        return cls(x1, y1, x2, y2)


def as_box_array(boxes) -> np.ndarray:
    """Coerce a box container to a ``(N, 4)`` float64 array."""
    if isinstance(boxes, ProposalSet):
        return boxes.boxes
    if isinstance(boxes, BoundingBox):
        return boxes.as_array()[None, :]
    arr = np.asarray(
        [b.as_tuple() if isinstance(b, BoundingBox) else b for b in boxes]
        if not isinstance(boxes, np.ndarray) else boxes,
        dtype=np.float64,
    )
    if arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, 4)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise ValueError(f"expected (N, 4) boxes, got shape {arr.shape}")
    return arr


def validate_boxes(boxes: np.ndarray) -> None:
    if not np.all(np.isfinite(boxes)):
        raise DegenerateBoxError("non-finite box coordinates")
    bad = np.flatnonzero((boxes[:, 2] <= boxes[:, 0]) | (boxes[:, 3] <= boxes[:, 1]))
    if bad.size:
        raise DegenerateBoxError(f"box {int(bad[0])} has no area: {boxes[bad[0]].tolist()}")


@dataclass(frozen=True)
class ProposalSet:
    """Ordered proposals of one image; box ``i`` has stable index ``i``."""

    image_id: str
    boxes: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = as_box_array(self.boxes).copy()
        if arr.shape[0] < 1:
            raise ValueError("a proposal set needs at least one box")
        validate_boxes(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "boxes", arr)

    def __len__(self) -> int:
        return self.boxes.shape[0]

    def __getitem__(self, index: int) -> BoundingBox:
        return BoundingBox.from_sequence(self.boxes[index])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other):
        if not isinstance(other, ProposalSet):
            return NotImplemented
        return self.image_id == other.image_id and np.array_equal(self.boxes, other.boxes)

    def __hash__(self):
        return hash((self.image_id, self.boxes.tobytes()))


def box_area(boxes: np.ndarray) -> np.ndarray:
    return (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes."""
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def iou_matrix(boxes_a, boxes_b) -> np.ndarray:
    """Pairwise IoU between ``(N, 4)`` and ``(M, 4)`` boxes, shape ``(N, M)``."""
    a = as_box_array(boxes_a)
    b = as_box_array(boxes_b)
    lt = np.maximum(a[:, None, :2], b[None, :, :2])
    rb = np.minimum(a[:, None, 2:], b[None, :, 2:])
    wh = np.clip(rb - lt, 0.0, None)
    inter = wh[..., 0] * wh[..., 1]
    union = box_area(a)[:, None] + box_area(b)[None, :] - inter
    return inter / union


def nms(boxes, scores: Sequence[float], threshold: float,
        overlaps: np.ndarray | None = None) -> list[int]:
    """Greedy non-maximum suppression.

    A box is dropped when its IoU with an already kept box exceeds
    ``threshold``. Equal scores are visited in ascending index order.

    Args:
        boxes: ``ProposalSet`` or ``(N, 4)`` array.
        scores: one score per box.
        threshold: IoU above which a lower-scored box is suppressed.
        overlaps: optional precomputed ``(N, N)`` IoU matrix of ``boxes``.

    Returns:
        Kept indices ordered by descending score.
    """
    arr = as_box_array(boxes)
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (arr.shape[0],):
        raise ValueError(f"got {scores.size} scores for {arr.shape[0]} boxes")
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    n = arr.shape[0]
    if n == 0:
        return []
    order = np.argsort(-scores, kind="stable")
    if overlaps is None:
        overlaps = iou_matrix(arr, arr)
    suppressed = np.zeros(n, dtype=bool)
    keep = []
    for i in order:
        if suppressed[i]:
            continue
        keep.append(int(i))
        suppressed |= overlaps[i] > threshold
    return keep


def boxes_to_cxcywh(boxes: np.ndarray) -> np.ndarray:
    w = boxes[:, 2] - boxes[:, 0]
    h = boxes[:, 3] - boxes[:, 1]
    return np.stack([boxes[:, 0] + 0.5 * w, boxes[:, 1] + 0.5 * h, w, h], axis=1)


def cxcywh_to_boxes(cxcywh: np.ndarray) -> np.ndarray:
    cx, cy, w, h = cxcywh.T
    return np.stack([cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h], axis=1)


def decode_offsets(boxes: np.ndarray, deltas: np.ndarray) -> np.ndarray:
    """Vectorized R-CNN decoding of ``(N, 4)`` deltas ``(tx, ty, tw, th)``."""
    c = boxes_to_cxcywh(as_box_array(boxes))
    d = np.asarray(deltas, dtype=np.float64).reshape(-1, 4)
    out = np.stack([
        c[:, 0] + d[:, 0] * c[:, 2],
        c[:, 1] + d[:, 1] * c[:, 3],
        c[:, 2] * np.exp(d[:, 2]),
        c[:, 3] * np.exp(d[:, 3]),
    ], axis=1)
    return cxcywh_to_boxes(out)


def encode_boxes(boxes: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Vectorized inverse of :func:`decode_offsets`."""
    c = boxes_to_cxcywh(as_box_array(boxes))
    t = boxes_to_cxcywh(as_box_array(targets))
    return np.stack([
        (t[:, 0] - c[:, 0]) / c[:, 2],
        (t[:, 1] - c[:, 1]) / c[:, 3],
        np.log(t[:, 2] / c[:, 2]),
        np.log(t[:, 3] / c[:, 3]),
    ], axis=1)


def clip_boxes(boxes: np.ndarray, width: float, height: float) -> np.ndarray:
    out = np.array(boxes, dtype=np.float64, copy=True)
    out[:, 0::2] = np.clip(out[:, 0::2], 0.0, width)
    out[:, 1::2] = np.clip(out[:, 1::2], 0.0, height)
    return out


def apply_offsets(r: BoundingBox, t: Sequence[float],
                  bounds: tuple[float, float] | None = None) -> BoundingBox:
    """Shift and rescale ``r`` by log-space offsets ``t = (tx, ty, tw, th)``.

    ``bounds = (width, height)`` clips the result to the image. Raises
    :class:`DegenerateBoxError` when the clipped box has no area.
    """
    t = np.asarray(t, dtype=np.float64)
    if t.shape != (4,) or not np.all(np.isfinite(t)):
        raise ValueError(f"offsets must be 4 finite values, got {t}")
    out = decode_offsets(r.as_array()[None, :], t[None, :])
    if bounds is not None:
        out = clip_boxes(out, *bounds)
    return BoundingBox.from_sequence(out[0])


def encode_offsets(r: BoundingBox, target: BoundingBox) -> tuple[float, float, float, float]:
    """Offsets that move ``r`` onto ``target``."""
    t = encode_boxes(r.as_array()[None, :], target.as_array()[None, :])[0]
    return tuple(float(v) for v in t)


def to_pixel_rects(boxes: np.ndarray, width: int, height: int) -> np.ndarray:
    """Round continuous boxes to integer pixel rectangles clipped to the raster.

    Coordinates are rounded half-up; rectangles that collapse keep
    ``x2 <= x1`` or ``y2 <= y1`` and must be treated as empty by callers.
    """
    rects = np.floor(as_box_array(boxes) + 0.5).astype(np.int64)
    rects[:, 0::2] = np.clip(rects[:, 0::2], 0, width)
    rects[:, 1::2] = np.clip(rects[:, 1::2], 0, height)
    return rects


def union_boxes(boxes: Iterable[BoundingBox]) -> BoundingBox:
    boxes = list(boxes)
    return BoundingBox(min(b.x1 for b in boxes), min(b.y1 for b in boxes),
                       max(b.x2 for b in boxes), max(b.y2 for b in boxes))
