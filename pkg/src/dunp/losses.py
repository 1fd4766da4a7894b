"""Segmentation losses.

bce:    mean over all elements of -(y*log(p) + (1-y)*log(1-p)), with p
        clamped to [1e-7, 1 - 1e-7] before the logs.
dice:   1 - (2*sum(p*y) + eps) / (sum(p^2) + sum(y^2) + eps), eps = 1.0,
        sums over the whole tensor (squared-denominator soft Dice).
hybrid: bce + dice.
total_loss: hybrid on the final mask plus lam * hybrid on the first
        mask (deep supervision of network 1).

All losses are differentiable Tensors and preserve the input dtype.
"""
from __future__ import annotations

from .autodiff import Tensor, clip, log, tsum
from .errors import ConfigurationError

CLAMP = 1e-7
DICE_EPS = 1.0


def _check_pair(pred: Tensor, target: Tensor, name: str) -> None:
    if pred.shape != target.shape:
        raise ConfigurationError(
            f"{name}: prediction shape {pred.shape} != target shape {target.shape}")


def bce(pred: Tensor, target: Tensor) -> Tensor:
    _check_pair(pred, target, "bce")
    p = clip(pred, CLAMP, 1.0 - CLAMP)
    return -(target * log(p) + (1.0 - target) * log(1.0 - p)).mean()


def dice(pred: Tensor, target: Tensor) -> Tensor:
    _check_pair(pred, target, "dice")
    inter = tsum(pred * target)
    denom = tsum(pred * pred) + tsum(target * target)
    return 1.0 - (2.0 * inter + DICE_EPS) / (denom + DICE_EPS)


def hybrid(pred: Tensor, target: Tensor) -> Tensor:
    return bce(pred, target) + dice(pred, target)


def total_loss(mask1: Tensor, mask2: Tensor, target: Tensor, lam: float = 1.0) -> Tensor:
    return hybrid(mask2, target) + lam * hybrid(mask1, target)
