"""Objectness-guided pseudo-label weighting for weakly supervised detection."""

from .evidence import EvidenceConfig, EvidenceReport, compute_evidence
from .geometry import BoundingBox, DegenerateBoxError, ProposalSet, iou, iou_matrix, nms
from .mining import MiningResult, MiningThresholds, mine, select_regression_reference
from .objectness import AlphaSchedule, alpha_at, combine, top_down_confidence
from .segmentation import SuperpixelMap, segment

__version__ = "0.1.0"

__all__ = [
    "AlphaSchedule", "BoundingBox", "DegenerateBoxError", "EvidenceConfig", "EvidenceReport",
    "MiningResult", "MiningThresholds", "ProposalSet", "SuperpixelMap", "__version__",
    "alpha_at", "combine", "compute_evidence", "iou", "iou_matrix", "mine", "nms", "segment",
    "select_regression_reference", "top_down_confidence",
]
