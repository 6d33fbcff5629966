"""Inference and detection metrics (AP at IoU > 0.5, CorLoc)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry import iou_matrix, nms
from .model import ModelParams, branch_probabilities, regression_offsets
from .training import regressed_boxes


@dataclass(frozen=True)
class Detections:
    """Scored boxes of one image; ``classes`` are 1-based."""

    image_id: str
    boxes: np.ndarray = field(repr=False)
    scores: np.ndarray = field(repr=False)
    classes: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return self.scores.size

    def of_class(self, c: int) -> tuple[np.ndarray, np.ndarray]:
        m = self.classes == c
        return self.boxes[m], self.scores[m]


def infer(params: ModelParams, image_id: str, boxes: np.ndarray, features: np.ndarray,
          image_size: tuple[int, int], use_regressor: bool = True,
          nms_threshold: float = 0.3, max_per_class: int = 100) -> Detections:
    """Average the refinement branches, move boxes by the regressor, NMS per class."""
    probs = np.mean(branch_probabilities(params, features), axis=0)[:, 1:]
    if use_regressor:
        width, height = image_size
        boxes = regressed_boxes(boxes, regression_offsets(params, features), width, height)
    valid = (boxes[:, 2] > boxes[:, 0]) & (boxes[:, 3] > boxes[:, 1])
    boxes = boxes[valid]
    probs = probs[valid]
    overlaps = iou_matrix(boxes, boxes)
    out_b, out_s, out_c = [], [], []
    for c in range(probs.shape[1]):
        keep = nms(boxes, probs[:, c], nms_threshold, overlaps=overlaps)[:max_per_class]
        out_b.append(boxes[keep])
        out_s.append(probs[keep, c])
        out_c.append(np.full(len(keep), c + 1))
    return Detections(image_id, np.concatenate(out_b).reshape(-1, 4),
                      np.concatenate(out_s), np.concatenate(out_c).astype(np.int64))


def average_precision(recall: np.ndarray, precision: np.ndarray) -> float:
    """All-point interpolated area under the precision-recall curve."""
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    idx = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[idx + 1] - mrec[idx]) * mpre[idx + 1]))


def match_detections(dets_by_image, gts_by_image, c: int, iou_threshold: float = 0.5):
    """Greedy score-ordered matching for class ``c``.

    Returns ``(scores, is_tp, n_gt)`` with detections sorted by descending score.
    """
    scores, tps = [], []
    n_gt = 0
    order_keys = []
    for image_id, (gt_boxes, gt_classes) in gts_by_image.items():
        n_gt += int(np.sum(gt_classes == c))
    for image_id, det in dets_by_image.items():
        b, s = det.of_class(c)
        for i in range(s.size):
            order_keys.append((image_id, i))
            scores.append(s[i])
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-scores, kind="stable")
    used = {k: np.zeros(int(np.sum(v[1] == c)), dtype=bool) for k, v in gts_by_image.items()}
    cache = {}
    for j in order:
        image_id, i = order_keys[j]
        gt_boxes, gt_classes = gts_by_image.get(image_id, (np.zeros((0, 4)), np.zeros(0)))
        g = gt_boxes[gt_classes == c]
        if g.shape[0] == 0:
            tps.append(False)
            continue
        if image_id not in cache:
            cache[image_id] = iou_matrix(dets_by_image[image_id].of_class(c)[0], g)
        ov = cache[image_id][i]
        best = int(np.argmax(ov))
        if ov[best] > iou_threshold and not used[image_id][best]:
            used[image_id][best] = True
            tps.append(True)
        else:
            tps.append(False)
    return scores[order], np.asarray(tps, dtype=bool), n_gt


def class_ap(dets_by_image, gts_by_image, c: int, iou_threshold: float = 0.5) -> float | None:
    _, tp, n_gt = match_detections(dets_by_image, gts_by_image, c, iou_threshold)
    if n_gt == 0:
        return None
    if tp.size == 0:
        return 0.0
    ctp = np.cumsum(tp)
    cfp = np.cumsum(~tp)
    return average_precision(ctp / n_gt, ctp / (ctp + cfp))


def corloc(dets_by_image, gts_by_image, num_classes: int,
           iou_threshold: float = 0.5) -> dict[int, float]:
    """Per class: share of images containing it whose top detection hits a ground truth."""
    out = {}
    for c in range(1, num_classes + 1):
        hits, total = 0, 0
        for image_id, (gt_boxes, gt_classes) in gts_by_image.items():
            g = gt_boxes[gt_classes == c]
            if g.shape[0] == 0:
                continue
            total += 1
            det = dets_by_image.get(image_id)
            if det is None:
                continue
            b, s = det.of_class(c)
            if s.size == 0:
                continue
            top = b[int(np.argmax(s))]
            if iou_matrix(top[None, :], g).max() > iou_threshold:
                hits += 1
        if total:
            out[c] = hits / total
    return out


@dataclass
class Metrics:
    ap: dict
    mean_ap: float
    corloc: dict
    mean_corloc: float

    def to_dict(self) -> dict:
        return {"ap": {str(k): v for k, v in self.ap.items()}, "map": self.mean_ap,
                "corloc": {str(k): v for k, v in self.corloc.items()},
                "mean_corloc": self.mean_corloc}


def evaluate(dets_by_image: dict, gts_by_image: dict, num_classes: int,
             iou_threshold: float = 0.5) -> Metrics:
    """AP per class, mAP and CorLoc over the same image set.

    ``gts_by_image`` maps image ids to ``(boxes, classes)`` with 1-based classes.
    """
    ap = {}
    for c in range(1, num_classes + 1):
        v = class_ap(dets_by_image, gts_by_image, c, iou_threshold)
        if v is not None:
            ap[c] = v
    cl = corloc(dets_by_image, gts_by_image, num_classes, iou_threshold)
    return Metrics(ap, float(np.mean(list(ap.values()))) if ap else 0.0,
                   cl, float(np.mean(list(cl.values()))) if cl else 0.0)


def detect_all(params: ModelParams, prepared, use_regressor: bool = True,
               nms_threshold: float = 0.3) -> dict:
    return {p.image_id: infer(params, p.image_id, p.boxes, p.features,
                              (p.scene.width, p.scene.height), use_regressor, nms_threshold)
            for p in prepared}


def ground_truth(prepared_or_scenes) -> dict:
    out = {}
    for item in prepared_or_scenes:
        scene = getattr(item, "scene", item)
        out[scene.image_id] = (scene.gt_boxes, scene.gt_classes)
    return out
