"""Training losses: heatmap MSE, patch-distribution divergence, and their weighted sum."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .gt import PatchDistribution
from .tensor import ShapeError, Tensor

PROB_FLOOR = 1e-12
KL_DIRECTIONS = ("gt_pred", "pred_gt")
PATCH_LOSSES = ("kl", "mse", "bce")


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 100.0
    lambda2: float = 1.0

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("loss weights must be non-negative")
        if self.lambda1 == 0 and self.lambda2 == 0:
            raise ValueError("loss weights cannot both be zero")


def _as_batch(x) -> Tensor:
    if isinstance(x, PatchDistribution):
        x = x.as_vector()
    return x if isinstance(x, Tensor) else Tensor(x)


def heatmap_mse(pred, gt, in_frame) -> Tensor:
    """Per-sample pixel MSE, zeroed for out-of-frame samples, averaged over the batch.

    Accepts a single (H, W) heatmap or a (N, H, W) batch.
    """
    pred = _as_batch(pred)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeError(f"heatmap shapes differ: {pred.shape} vs {gt.shape}")
    if pred.ndim == 2:
        pred, gt = pred.reshape(1, *pred.shape), gt[None]
    n, h, w = pred.shape
    mask = np.broadcast_to(np.asarray(in_frame, dtype=np.float64).reshape(n, 1, 1), (n, h, w))
    diff = pred - Tensor(gt)
    return (diff * diff * Tensor(mask)).sum() * (1.0 / (n * h * w))


def patch_kl(gt, pred, direction: str = "gt_pred") -> Tensor:
    """KL divergence between patch distributions (natural log, 0 ln 0 = 0), batch mean.

    ``gt_pred`` computes KL(gt || pred); ``pred_gt`` the reversed order. The
    distribution being divided by is floored at 1e-12.
    """
    if direction not in KL_DIRECTIONS:
        raise ValueError(f"direction must be one of {KL_DIRECTIONS}")
    pred = _as_batch(pred)
    gt = np.asarray(gt.as_vector() if isinstance(gt, PatchDistribution) else gt, dtype=np.float64)
    if gt.shape != pred.shape:
        raise ShapeError(f"distribution lengths differ: {gt.shape} vs {pred.shape}")
    n = 1 if gt.ndim == 1 else gt.shape[0]
    if direction == "gt_pred":
        safe = np.where(gt > 0, gt, 1.0)
        entropy_term = float(np.sum(np.where(gt > 0, gt * np.log(safe), 0.0)))
        cross = (Tensor(gt) * T.log(T.clamp_min(pred, PROB_FLOOR))).sum()
        return (entropy_term - cross) * (1.0 / n)
    log_gt = np.log(np.maximum(gt, PROB_FLOOR))
    p = T.clamp_min(pred, PROB_FLOOR)
    return (p * (T.log(p) - Tensor(log_gt))).sum() * (1.0 / n)


def patch_mse(gt, pred) -> Tensor:
    pred = _as_batch(pred)
    diff = pred - Tensor(np.asarray(gt, dtype=np.float64))
    n = 1 if pred.ndim == 1 else pred.shape[0]
    return (diff * diff).sum() * (1.0 / n)


def binary_cross_entropy(target, prob) -> Tensor:
    """Elementwise BCE summed over the last axis, batch mean."""
    prob = _as_batch(prob)
    y = np.asarray(target, dtype=np.float64)
    p = T.clamp_min(prob, PROB_FLOOR)
    q = T.clamp_min(1.0 - prob, PROB_FLOOR)
    ll = Tensor(y) * T.log(p) + Tensor(1.0 - y) * T.log(q)
    n = 1 if prob.ndim <= 1 else prob.shape[0]
    return -ll.sum() * (1.0 / n)


def patch_loss(gt, pred, kind: str = "kl", direction: str = "gt_pred") -> Tensor:
    if kind == "kl":
        return patch_kl(gt, pred, direction)
    if kind == "mse":
        return patch_mse(gt, pred)
    if kind == "bce":
        return binary_cross_entropy(gt, pred)
    raise ValueError(f"patch loss must be one of {PATCH_LOSSES}")


def combined_loss(l_hm, l_pd, w: LossWeights):
    return l_hm * w.lambda1 + l_pd * w.lambda2
