"""Pseudo ground-truth mining from a previous branch and regression references."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import as_box_array, iou_matrix, nms
from .objectness import one_hot


@dataclass(frozen=True)
class MiningThresholds:
    t_nms: float = 0.3
    t_conf: float = 0.7
    t_iou: float = 0.5

    def __post_init__(self):
        for name in ("t_nms", "t_conf", "t_iou"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


@dataclass(frozen=True)
class Claim:
    """A seed of class ``label`` claiming ``box``."""

    box: int
    seed: int
    label: int
    score: float


@dataclass(frozen=True)
class MiningResult:
    """Output of one mining pass.

    ``labels[r]`` is the class of proposal ``r`` (0 = background);
    ``seed_of[r]`` is the seed that claimed ``r`` or -1 for background.
    ``seeds`` maps each positive class to its seed indices and
    ``threshold_seeds`` to those that passed ``t_conf`` (fallbacks excluded).
    """

    keep: tuple
    seek: tuple
    neighbors: tuple
    labels: np.ndarray = field(repr=False)
    seed_of: np.ndarray = field(repr=False)
    seeds: dict
    threshold_seeds: dict
    num_classes: int

    @property
    def positives(self) -> tuple:
        return tuple(sorted(set(self.seek) | set(self.neighbors)))

    def one_hot(self) -> np.ndarray:
        return one_hot(self.labels, self.num_classes + 1)


def with_background(base_scores: np.ndarray) -> np.ndarray:
    """Turn a ``(C, R)`` base score matrix into ``(R, C+1)`` with a zero background column."""
    s = np.asarray(base_scores, dtype=np.float64)
    return np.concatenate([np.zeros((s.shape[1], 1)), s.T], axis=1)


def positive_classes(image_labels) -> list[int]:
    """Class indices (1-based) for which the indicator vector is set.

    ``image_labels`` is a length-``C`` indicator over foreground classes.
    """
    lab = np.asarray(image_labels)
    return [int(c) + 1 for c in np.flatnonzero(lab > 0)]


def label_conflict_resolution(claims, num_boxes: int) -> tuple[np.ndarray, np.ndarray]:
    """Resolve overlapping claims: highest seed score wins, then lower seed index.

    Returns ``(labels, seed_of)``; unclaimed boxes get label 0 and seed -1.
    """
    labels = np.zeros(num_boxes, dtype=np.int64)
    seed_of = np.full(num_boxes, -1, dtype=np.int64)
    best: dict[int, Claim] = {}
    for c in claims:
        cur = best.get(c.box)
        if (cur is None or c.score > cur.score
                or (c.score == cur.score and (c.seed, c.label) < (cur.seed, cur.label))):
            best[c.box] = c
    for box, c in best.items():
        labels[box] = c.label
        seed_of[box] = c.seed
    return labels, seed_of


def mine(prev_probs: np.ndarray, boxes, image_labels,
         thresholds: MiningThresholds = MiningThresholds(), use_nms: bool = True,
         overlaps: np.ndarray | None = None) -> MiningResult:
    """Mine seed and neighbour boxes from previous-branch probabilities.

    Args:
        prev_probs: ``(R, C+1)`` probabilities of the supervising branch,
            column 0 background. Use :func:`with_background` for the base
            detector's ``(C, R)`` scores.
        boxes: ``ProposalSet`` or ``(R, 4)`` array.
        image_labels: length-``C`` image-level indicator of present classes.
        thresholds: NMS, confidence and neighbour IoU thresholds.
        use_nms: when false every present class gets only its top box as seed.
        overlaps: optional precomputed ``(R, R)`` IoU matrix.
    """
    arr = as_box_array(boxes)
    p = np.asarray(prev_probs, dtype=np.float64)
    n = arr.shape[0]
    if n == 0:
        raise ValueError("cannot mine an empty proposal set")
    if p.shape[0] != n:
        raise ValueError(f"{p.shape[0]} score rows for {n} proposals")
    num_classes = p.shape[1] - 1
    classes = positive_classes(image_labels)
    if len(image_labels) != num_classes:
        raise ValueError(f"image labels have {len(image_labels)} classes, scores {num_classes}")
    if not classes:
        raise ValueError("image has no positive class")
    if overlaps is None:
        overlaps = iou_matrix(arr, arr)

    if use_nms:
        keep = nms(arr, p[:, classes].max(axis=1), thresholds.t_nms, overlaps=overlaps)
    else:
        keep = []
    keep_arr = np.asarray(keep, dtype=np.int64)

    seeds: dict[int, tuple] = {}
    thr_seeds: dict[int, tuple] = {}
    for c in classes:
        chosen = ()
        if keep_arr.size:
            hits = keep_arr[p[keep_arr, c] > thresholds.t_conf]
            chosen = tuple(int(i) for i in np.sort(hits))
        thr_seeds[c] = chosen
        if not chosen:
            chosen = (int(np.argmax(p[:, c])),)
        seeds[c] = chosen

    claims = []
    neighbors = set()
    for c in classes:
        for s in seeds[c]:
            near = np.flatnonzero(overlaps[s] > thresholds.t_iou)
            neighbors.update(int(i) for i in near if i != s)
            score = float(p[s, c])
            claims.append(Claim(s, s, c, score))
            claims.extend(Claim(int(i), s, c, score) for i in near if i != s)
    labels, seed_of = label_conflict_resolution(claims, n)
    seek = tuple(sorted({s for c in classes for s in seeds[c]}))
    return MiningResult(
        keep=tuple(keep), seek=seek, neighbors=tuple(sorted(neighbors)),
        labels=labels, seed_of=seed_of, seeds=seeds, threshold_seeds=thr_seeds,
        num_classes=num_classes,
    )


def select_regression_reference(r: int, mined: MiningResult, weights,
                                boxes, t_iou: float = 0.5,
                                overlaps: np.ndarray | None = None) -> int | None:
    """Index of the positive box overlapping ``r`` with the largest weight.

    Returns ``None`` when no positive proposal has IoU above ``t_iou`` with ``r``.
    """
    pos = np.asarray(mined.positives, dtype=np.int64)
    if pos.size == 0:
        return None
    if overlaps is None:
        arr = as_box_array(boxes)
        ov = iou_matrix(arr[r:r + 1], arr[pos])[0]
    else:
        ov = overlaps[r, pos]
    cand = pos[ov > t_iou]
    if cand.size == 0:
        return None
    w = np.asarray(weights, dtype=np.float64)[cand]
    return int(cand[np.argmax(w)])  # cand is ascending, argmax takes the first max


def regression_references(mined: MiningResult, weights, boxes, t_iou: float = 0.5,
                          overlaps: np.ndarray | None = None) -> dict[int, int]:
    """References for every positive proposal that has one."""
    arr = as_box_array(boxes)
    if overlaps is None:
        overlaps = iou_matrix(arr, arr)
    pos = np.asarray(mined.positives, dtype=np.int64)
    if pos.size == 0:
        return {}
    w = np.asarray(weights, dtype=np.float64)
    sub = overlaps[np.ix_(pos, pos)] > t_iou
    masked = np.where(sub, w[pos][None, :], -np.inf)
    best = np.argmax(masked, axis=1)
    has = sub.any(axis=1)
    return {int(pos[i]): int(pos[best[i]]) for i in np.flatnonzero(has)}
