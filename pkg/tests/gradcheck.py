"""Finite-difference gradient checks and the random loss instances they run on."""

import numpy as np

from objdistill.losses import (base_loss, base_scores, box_loss, refinement_loss, smooth_l1,
                               smooth_l1_grad, total_loss)
from objdistill.objectness import one_hot

STEP = 1e-5


def numeric_grad(f, x, step=STEP):
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + step
        hi = f(x)
        flat[i] = old - step
        lo = f(x)
        flat[i] = old
        gflat[i] = (hi - lo) / (2 * step)
    return g


def relative_error(analytic, numeric) -> float:
    a = np.ravel(analytic)
    n = np.ravel(numeric)
    scale = max(np.linalg.norm(a) + np.linalg.norm(n), 1e-8)
    return float(np.linalg.norm(a - n) / scale)


def base_instance(rng):
    c, r = int(rng.integers(1, 5)), int(rng.integers(1, 12))
    xc = rng.normal(0, 1.5, (c, r))
    xd = rng.normal(0, 1.5, (c, r))
    y = (rng.random(c) < 0.5).astype(float)
    return xc, xd, y


def refinement_instance(rng):
    r, c1 = int(rng.integers(1, 15)), int(rng.integers(2, 6))
    logits = rng.normal(0, 2, (r, c1))
    labels = one_hot(rng.integers(0, c1, r), c1)
    return logits, labels, rng.random(r)


def box_instance(rng):
    p = int(rng.integers(1, 10))
    pred = rng.normal(0, 1.5, (p, 4))
    target = rng.normal(0, 1.5, (p, 4))
    # keep every residual clear of the kink so the difference quotient is smooth
    d = pred - target
    near = np.abs(np.abs(d) - 1.0) < 1e-3
    pred[near] += 0.01
    return pred, target, rng.random(p)


def base_gradient_errors(rng):
    xc, xd, y = base_instance(rng)
    _, (gc, gd) = base_loss(base_scores(xc, xd), y)
    nc = numeric_grad(lambda v: base_loss(base_scores(v, xd), y)[0], xc)
    nd = numeric_grad(lambda v: base_loss(base_scores(xc, v), y)[0], xd)
    return relative_error(gc, nc), relative_error(gd, nd)


def refinement_gradient_error(rng):
    logits, labels, w = refinement_instance(rng)
    _, g = refinement_loss(logits, labels, w)
    n = numeric_grad(lambda v: refinement_loss(v, labels, w)[0], logits)
    return relative_error(g, n)


def smooth_l1_gradient_error(rng):
    x = rng.normal(0, 2, 8)
    x[np.abs(np.abs(x) - 1.0) < 1e-3] += 0.01
    n = numeric_grad(lambda v: float(np.sum(smooth_l1(v))), x)
    return relative_error(smooth_l1_grad(x), n)


def box_gradient_error(rng):
    pred, target, w = box_instance(rng)
    _, g = box_loss(pred, target, w)
    n = numeric_grad(lambda v: box_loss(v, target, w)[0], pred)
    return relative_error(g, n)


def composite_gradient_error(rng):
    """Linear heads on shared features; total gradient from weighted part gradients."""
    r, d, c, k = int(rng.integers(2, 8)), 5, 3, 3
    feats = rng.normal(0, 1, (r, d))
    y = np.zeros(c)
    y[rng.integers(c)] = 1.0
    labels = [one_hot(rng.integers(0, c + 1, r), c + 1) for _ in range(k)]
    weights = [rng.random(r) for _ in range(k)]
    pos = np.sort(rng.choice(r, size=int(rng.integers(1, r + 1)), replace=False))
    target = rng.normal(0, 0.5, (pos.size, 4))
    wbox = rng.random(pos.size)
    shapes = [(d, c), (d, c)] + [(d, c + 1)] * k + [(d, 4)]
    sizes = [a * b for a, b in shapes]
    theta = rng.normal(0, 0.5, sum(sizes))

    def unpack(t):
        out, i = [], 0
        for shape, size in zip(shapes, sizes):
            out.append(t[i:i + size].reshape(shape))
            i += size
        return out

    def value_and_grad(t):
        wc, wd, *wr, wb = unpack(t)
        lb, (gc, gd) = base_loss(base_scores((feats @ wc).T, (feats @ wd).T), y)
        lrefs, grefs = [], []
        for j in range(k):
            lr, gr = refinement_loss(feats @ wr[j], labels[j], weights[j])
            lrefs.append(lr)
            grefs.append(feats.T @ gr)
        lx, gx = box_loss(feats[pos] @ wb, target, wbox)
        total = total_loss(lb, lrefs, lx).total
        parts = [feats.T @ gc.T, feats.T @ gd.T] + [1.0 * g for g in grefs] + [0.3 * feats[pos].T @ gx]
        return total, np.concatenate([p.ravel() for p in parts])

    _, g = value_and_grad(theta)
    n = numeric_grad(lambda t: value_and_grad(t)[0], theta)
    return relative_error(g, n)
