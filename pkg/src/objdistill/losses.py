"""Training objectives with analytic gradients.

All functions return ``(value, gradient)`` pairs; combination weights and
pseudo labels are constants within a step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS = 1e-7
LAMBDA_REF = 1.0
LAMBDA_BOX = 0.3


def softmax(x: np.ndarray, axis: int) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


@dataclass(frozen=True)
class BaseScores:
    sigma_c: np.ndarray  # (C, R), columns sum to 1
    sigma_d: np.ndarray  # (C, R), rows sum to 1
    s: np.ndarray
    phi: np.ndarray      # (C,), clamped to [EPS, 1 - EPS]
    phi_raw: np.ndarray


def base_scores(xc: np.ndarray, xd: np.ndarray) -> BaseScores:
    """Two-stream scores: class softmax per region times region softmax per class."""
    xc = np.asarray(xc, dtype=np.float64)
    xd = np.asarray(xd, dtype=np.float64)
    if xc.shape != xd.shape or xc.ndim != 2:
        raise ValueError(f"stream shapes differ: {xc.shape} vs {xd.shape}")
    sigma_c = softmax(xc, axis=0)
    sigma_d = softmax(xd, axis=1)
    s = sigma_c * sigma_d
    phi_raw = s.sum(axis=1)
    return BaseScores(sigma_c, sigma_d, s, np.clip(phi_raw, EPS, 1.0 - EPS), phi_raw)


def base_loss(scores: BaseScores, image_labels) -> tuple[float, tuple[np.ndarray, np.ndarray]]:
    """Multi-label binary cross entropy on image scores.

    Returns the loss and its gradients with respect to ``(xc, xd)``.
    """
    y = np.asarray(image_labels, dtype=np.float64)
    phi = scores.phi
    loss = float(-np.sum(y * np.log(phi) + (1.0 - y) * np.log(1.0 - phi)))
    g = -y / phi + (1.0 - y) / (1.0 - phi)
    # the clamp has zero slope outside (EPS, 1 - EPS)
    g = np.where((scores.phi_raw > EPS) & (scores.phi_raw < 1.0 - EPS), g, 0.0)
    sc, sd = scores.sigma_c, scores.sigma_d
    gs = g[:, None] * sd * sc                                  # g_c * s_cr
    grad_xc = sc * (g[:, None] * sd) - sc * gs.sum(axis=0, keepdims=True)
    grad_xd = g[:, None] * sd * (sc - scores.phi_raw[:, None])
    return loss, (grad_xc, grad_xd)


def refinement_loss(logits: np.ndarray, labels: np.ndarray, weights) -> tuple[float, np.ndarray]:
    """Weighted mean cross entropy over all proposals of one branch.

    Args:
        logits: ``(R, C+1)`` branch logits.
        labels: ``(R, C+1)`` one-hot pseudo labels.
        weights: ``(R,)`` per-proposal loss weights.

    Returns:
        Loss and its gradient with respect to ``logits``.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    n = logits.shape[0]
    p = softmax(logits, axis=1)
    picked = np.sum(p * labels, axis=1)
    ce = -np.log(np.maximum(picked, EPS))
    loss = float(np.sum(w * ce) / n)
    live = (picked >= EPS)[:, None]
    grad = np.where(live, (w / n)[:, None] * (p - labels), 0.0)
    return loss, grad


def smooth_l1(x):
    x = np.asarray(x, dtype=np.float64)
    ax = np.abs(x)
    out = np.where(ax < 1.0, 0.5 * x * x, ax - 0.5)
    return float(out) if out.ndim == 0 else out


def smooth_l1_grad(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.where(np.abs(x) < 1.0, x, np.sign(x))
    return float(out) if out.ndim == 0 else out


def box_loss(pred: np.ndarray, target: np.ndarray, weights) -> tuple[float, np.ndarray]:
    """Weighted mean smooth-L1 over positives; 0 when there are none.

    Args:
        pred: ``(P, 4)`` predicted offsets of the positives with a reference.
        target: ``(P, 4)`` target offsets.
        weights: ``(P,)`` loss weights from the last branch.
    """
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, 4)
    target = np.asarray(target, dtype=np.float64).reshape(-1, 4)
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    n = pred.shape[0]
    if n == 0:
        return 0.0, np.zeros_like(pred)
    d = pred - target
    loss = float(np.sum(w * smooth_l1(d).sum(axis=1)) / n)
    grad = (w / n)[:, None] * smooth_l1_grad(d)
    return loss, grad


@dataclass(frozen=True)
class LossBreakdown:
    l_base: float
    l_ref: tuple
    l_box: float
    total: float
    lambda_ref: float = LAMBDA_REF
    lambda_box: float = LAMBDA_BOX


def total_loss(l_base: float, l_ref, l_box: float,
               lambda_ref: float = LAMBDA_REF, lambda_box: float = LAMBDA_BOX) -> LossBreakdown:
    l_ref = tuple(float(v) for v in l_ref)
    parts = (l_base, *l_ref, l_box)
    if not all(np.isfinite(parts)) or min(parts) < 0:
        raise ValueError(f"loss parts must be finite and nonnegative, got {parts}")
    total = l_base + lambda_ref * sum(l_ref) + lambda_box * l_box
    return LossBreakdown(float(l_base), l_ref, float(l_box), float(total), lambda_ref, lambda_box)
