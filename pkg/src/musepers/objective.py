"""Concordance correlation coefficient: metric, training loss, combined score.

Population statistics (divide by T) everywhere, so the loss is exactly one
minus the metric.
"""
from dataclasses import dataclass

import numpy as np

from .errors import Degenerate, LengthMismatch


@dataclass(frozen=True)
class CccBreakdown:
    ccc: float
    pearson: float
    mean_x: float
    mean_y: float
    std_x: float
    std_y: float
    denominator: float


def _pair(pred, target):
    x = np.asarray(pred, dtype=np.float64).ravel()
    y = np.asarray(target, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise LengthMismatch(f"prediction has {x.size} steps, target has {y.size}")
    if x.size < 2:
        raise LengthMismatch("CCC needs at least 2 steps")
    return x, y


def _moments(x, y):
    mx, my = x.mean(), y.mean()
    dx, dy = x - mx, y - my
    vx, vy = np.mean(dx * dx), np.mean(dy * dy)
    cov = np.mean(dx * dy)
    return mx, my, dx, dy, vx, vy, cov


def ccc(pred, target):
    x, y = _pair(pred, target)
    mx, my, _, _, vx, vy, cov = _moments(x, y)
    denom = vx + vy + (mx - my) ** 2
    if denom <= 0.0:
        raise Degenerate("both sequences are constant and equal; CCC is undefined")
    sx, sy = np.sqrt(vx), np.sqrt(vy)
    rho = cov / (sx * sy) if sx > 0 and sy > 0 else 0.0
    value = float(np.clip(2.0 * cov / denom, -1.0, 1.0))
    return CccBreakdown(value, float(np.clip(rho, -1.0, 1.0)), float(mx), float(my), float(sx), float(sy), float(denom))


def ccc_loss(pred, target, on_degenerate="raise"):
    """``(1 - CCC, d loss / d pred)``; the target is treated as constant.

    With ``on_degenerate="zero"`` a zero denominator yields loss 1 and a zero
    gradient instead of raising (used during training).
    """
    x, y = _pair(pred, target)
    T = x.size
    mx, my, dx, dy, vx, vy, cov = _moments(x, y)
    denom = vx + vy + (mx - my) ** 2
    if denom <= 0.0:
        if on_degenerate == "zero":
            return 1.0, np.zeros(T)
        raise Degenerate("both sequences are constant and equal; CCC is undefined")
    num = 2.0 * cov
    # d num / dx_i = 2 dy_i / T ; d denom / dx_i = 2 (dx_i + mx - my) / T
    d_ccc = (2.0 * dy * denom - num * 2.0 * (dx + (mx - my))) / (T * denom * denom)
    return float(1.0 - num / denom), -d_ccc


def combined_score(arousal_ccc, valence_ccc):
    return (float(arousal_ccc) + float(valence_ccc)) / 2.0


def ccc_loss_rows(pred, target):
    """Row-wise :func:`ccc_loss` over (B, T) arrays with the training rule
    for degenerate rows (loss 1, zero gradient). Returns ``(losses, grads)``."""
    x = np.asarray(pred, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 2:
        raise LengthMismatch(f"prediction shape {x.shape} does not match target {y.shape}")
    T = x.shape[1]
    if T < 2:
        raise LengthMismatch("CCC needs at least 2 steps")
    mx = x.mean(axis=1, keepdims=True)
    my = y.mean(axis=1, keepdims=True)
    dx, dy = x - mx, y - my
    vx = np.mean(dx * dx, axis=1, keepdims=True)
    vy = np.mean(dy * dy, axis=1, keepdims=True)
    cov = np.mean(dx * dy, axis=1, keepdims=True)
    denom = vx + vy + (mx - my) ** 2
    ok = denom > 0.0
    safe = np.where(ok, denom, 1.0)
    num = 2.0 * cov
    d_ccc = (2.0 * dy * safe - num * 2.0 * (dx + (mx - my))) / (T * safe * safe)
    losses = np.where(ok, 1.0 - num / safe, 1.0)[:, 0]
    grads = np.where(ok, -d_ccc, 0.0)
    return losses, grads
