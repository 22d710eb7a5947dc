"""Composite squared-error loss on voltages and branch flows."""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError
from .head import Prediction

DEFAULT_WEIGHTS = (1.0, 1.0, 1.0)


def _blocks(n_out: int, n: int):
    nb = (n_out - 2 * n) // 2
    if n_out != 2 * n + 2 * nb or nb < 1:
        raise ValidationError(f"prediction length {n_out} does not fit {n} buses")
    return [slice(0, 2 * n), slice(2 * n, 2 * n + nb), slice(2 * n + nb, n_out)]


def per_sample_loss(pred_vec, target, n: int, weights=DEFAULT_WEIGHTS) -> np.ndarray:
    """Loss of each row; ``pred_vec`` and ``target`` are ``(B, 2n + 2 n_branch)``."""
    pred_vec = np.atleast_2d(pred_vec)
    target = np.atleast_2d(np.asarray(target, dtype=float))
    if pred_vec.shape != target.shape:
        raise ValidationError(f"prediction shape {pred_vec.shape} does not match target shape {target.shape}")
    r = pred_vec - target
    return sum(w * np.mean(r[:, sl] ** 2, axis=1) for w, sl in zip(weights, _blocks(r.shape[1], n)))


def loss_cotangent(pred_vec, target, n: int, weights=DEFAULT_WEIGHTS) -> np.ndarray:
    """Derivative of each row's loss w.r.t. that row's prediction vector."""
    r = np.atleast_2d(pred_vec) - np.atleast_2d(target)
    cot = np.empty_like(r)
    for w, sl in zip(weights, _blocks(r.shape[1], n)):
        cot[:, sl] = 2.0 * w * r[:, sl] / (sl.stop - sl.start)
    return cot


def loss(pred: Prediction, target, weights=DEFAULT_WEIGHTS) -> float:
    """Batch-mean composite loss in normalized units.

    Each of the three terms (voltages, active flows, reactive flows) is a
    mean over its components.
    """
    n = np.shape(pred.v_hat)[-1]
    return float(np.mean(per_sample_loss(pred.vector(), target, n, weights)))
