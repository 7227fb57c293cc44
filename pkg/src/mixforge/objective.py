"""Losses and evaluation metrics.

Probabilities are clamped below at ``PROB_FLOOR`` before taking logarithms so
that a perfect one-hot prediction has a finite loss.
"""

from __future__ import annotations

import numpy as np

from .errors import EmptyInputError, ParameterError, ShapeError

PROB_FLOOR = 1e-12


def _pair(pred, y) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if pred.shape[-1:] != y.shape[-1:]:
        raise ShapeError(f"prediction has {pred.shape[-1]} classes, label has {y.shape[-1]}")
    return pred, y


def cross_entropy(pred, y):
    """``-sum_k y_k log pred_k`` along the last axis (scalar for 1-D inputs)."""
    pred, y = _pair(pred, y)
    loss = -(y * np.log(np.maximum(pred, PROB_FLOOR))).sum(axis=-1)
    return float(loss) if loss.ndim == 0 else loss


def mixup_cross_entropy(pred, y_i, y_j, lam):
    """``lam * CE(pred, y_i) + (1 - lam) * CE(pred, y_j)``; ``lam`` may be per-row."""
    lam = np.asarray(lam, dtype=np.float64)
    if np.any((lam < 0) | (lam > 1)):
        raise ParameterError("lambda must lie in [0, 1]")
    out = lam * cross_entropy(pred, y_i) + (1.0 - lam) * cross_entropy(pred, y_j)
    return float(out) if np.ndim(out) == 0 else out


def _preds_targets(preds, targets) -> tuple[np.ndarray, np.ndarray]:
    preds = np.atleast_2d(np.asarray(preds, dtype=np.float64))
    targets = np.asarray(targets, dtype=int).ravel()
    if targets.size == 0 or preds.shape[0] == 0:
        raise EmptyInputError("no predictions to score")
    if preds.shape[0] != targets.size:
        raise ShapeError(f"{preds.shape[0]} predictions but {targets.size} targets")
    return preds, targets


def top1_accuracy(preds, targets) -> float:
    preds, targets = _preds_targets(preds, targets)
    # np.argmax returns the lowest index among ties
    return float(np.mean(np.argmax(preds, axis=1) == targets))


def calibration_bins(preds, targets, bins: int = 15):
    """Per-bin ``(count, accuracy, confidence)`` for equal-width confidence bins.

    Bins are ``(k/B, (k+1)/B]``; a confidence of exactly 0 joins the first bin.
    """
    preds, targets = _preds_targets(preds, targets)
    if bins < 1:
        raise ParameterError(f"bins must be >= 1, got {bins}")
    conf = preds.max(axis=1)
    correct = (np.argmax(preds, axis=1) == targets).astype(np.float64)
    edges = np.linspace(0.0, 1.0, bins + 1)
    idx = np.clip(np.searchsorted(edges, conf, side="left") - 1, 0, bins - 1)
    count = np.bincount(idx, minlength=bins).astype(np.float64)
    acc_sum = np.bincount(idx, weights=correct, minlength=bins)
    conf_sum = np.bincount(idx, weights=conf, minlength=bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        acc = np.where(count > 0, acc_sum / count, 0.0)
        mean_conf = np.where(count > 0, conf_sum / count, 0.0)
    return count, acc, mean_conf


def ece(preds, targets, bins: int = 15) -> float:
    """Expected calibration error: ``sum_b (n_b / N) |acc_b - conf_b|``."""
    count, acc, conf = calibration_bins(preds, targets, bins)
    return float(np.sum(count / count.sum() * np.abs(acc - conf)))
