"""Top-down confidence, bottom-up/top-down combination and alpha schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SCHEDULE_FAMILIES = ("constant", "polynomial", "cosine")
_FAMILY_ALIASES = {"const": "constant", "poly": "polynomial", "cos": "cosine"}


@dataclass(frozen=True)
class AlphaSchedule:
    """Impact factor of bottom-up evidence as a function of the step.

    ``gamma`` is the exponent for ``polynomial`` (``1 - (n/N)**gamma``) and the
    constant value for ``constant``; ``cosine`` ignores it. Steps before
    ``warmup_steps`` always give 0.
    """

    family: str = "polynomial"
    gamma: float = 1.0
    total_steps: int = 80_000
    warmup_steps: int = 2_000

    def __post_init__(self):
        family = _FAMILY_ALIASES.get(self.family, self.family)
        if family not in SCHEDULE_FAMILIES:
            raise ValueError(f"unknown schedule family {self.family!r}")
        object.__setattr__(self, "family", family)
        if self.total_steps < 1:
            raise ValueError("total_steps must be positive")
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be nonnegative")
        if family == "constant" and not 0.0 <= self.gamma <= 1.0:
            raise ValueError("constant alpha must lie in [0, 1]")
        if family == "polynomial" and self.gamma <= 0:
            raise ValueError("polynomial gamma must be positive")


def alpha_at(schedule: AlphaSchedule, n: int) -> float:
    if n < 0 or n > schedule.total_steps:
        raise ValueError(f"step {n} outside [0, {schedule.total_steps}]")
    if n < schedule.warmup_steps:
        return 0.0
    x = n / schedule.total_steps
    if schedule.family == "constant":
        a = schedule.gamma
    elif schedule.family == "polynomial":
        a = 1.0 - x ** schedule.gamma
    else:
        a = 0.5 * (1.0 + math.cos(math.pi * x))
    return min(1.0, max(0.0, a))


def alpha_table(schedule: AlphaSchedule) -> list[tuple[int, float]]:
    return [(n, alpha_at(schedule, n)) for n in range(schedule.total_steps + 1)]


def check_one_hot(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.float64)
    if labels.ndim != 2:
        raise ValueError("labels must be an (R, C+1) one-hot matrix")
    ok = np.all((labels == 0) | (labels == 1), axis=1) & (labels.sum(axis=1) == 1)
    if not ok.all():
        raise ValueError(f"label row {int(np.flatnonzero(~ok)[0])} is not one-hot")
    return labels


def one_hot(classes, num_classes_with_bg: int) -> np.ndarray:
    classes = np.asarray(classes, dtype=np.int64)
    out = np.zeros((classes.size, num_classes_with_bg))
    out[np.arange(classes.size), classes] = 1.0
    return out


def top_down_confidence(prev_probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Previous-branch probability of each proposal's mined class.

    Args:
        prev_probs: ``(R, C+1)`` probabilities of branch ``k-1``.
        labels: ``(R, C+1)`` one-hot pseudo labels of branch ``k``.
    """
    prev = np.asarray(prev_probs, dtype=np.float64)
    labels = check_one_hot(labels)
    if prev.shape != labels.shape:
        raise ValueError(f"probabilities {prev.shape} and labels {labels.shape} differ")
    return prev[np.arange(prev.shape[0]), labels.argmax(axis=1)]


def combine(o_bu, o_td, alpha: float):
    """``alpha * o_bu + (1 - alpha) * o_td``; works on scalars or arrays."""
    if alpha == 1.0:
        return o_bu * 1.0
    if alpha == 0.0:
        return o_td * 1.0
    return alpha * o_bu + (1.0 - alpha) * o_td


@dataclass(frozen=True)
class ObjectnessReport:
    step: int
    alpha: float
    o_bu: np.ndarray = field(repr=False)
    o_td: tuple = field(repr=False)
    weights: tuple = field(repr=False)
