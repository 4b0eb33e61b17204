"""Scalar loss functions over predicted maps, with analytic gradients.

Gradients are taken with respect to the prediction rasters only; there is no
network here. Each function returns a LossValue carrying the scalar and one
gradient array per prediction input.
"""

from dataclasses import dataclass, field

import numpy as np

EPS = 1e-12
DICE_SMOOTH = 1.0
SOFT_MARKER_STEEPNESS = 50.0


@dataclass
class LossValue:
    value: float
    gradients: dict = field(default_factory=dict)


@dataclass
class LossWeights:
    alpha: float = 1.0

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")


def _check_shapes(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    return pred, gt


def ce_instance_loss(pred_fg, gt_fg):
    """Mean binary cross-entropy of the foreground probability map."""
    pred, gt = _check_shapes(pred_fg, gt_fg)
    p = np.clip(pred, EPS, 1.0 - EPS)
    m = p.size
    value = -np.mean(gt * np.log(p) + (1.0 - gt) * np.log(1.0 - p))
    grad = np.where((pred > EPS) & (pred < 1.0 - EPS),
                    (-gt / p + (1.0 - gt) / (1.0 - p)) / m, 0.0)
    return LossValue(float(value), {"pred_fg": grad})


def ma_loss(pred_ma, gt_ma):
    """Mean squared error against the ground-truth distance map."""
    pred, gt = _check_shapes(pred_ma, gt_ma)
    m = pred.size
    diff = pred - gt
    value = float(np.mean(diff * diff))
    return LossValue(value, {"pred_ma": 2.0 * diff / m})


def marker_loss(pred_mc, gt_mc, smooth=DICE_SMOOTH):
    """Soft Dice loss between predicted and true marker maps."""
    pred, gt = _check_shapes(pred_mc, gt_mc)
    inter = float(np.sum(pred * gt))
    total = float(np.sum(pred) + np.sum(gt))
    dice = (2.0 * inter + smooth) / (total + smooth)
    value = 1.0 - dice
    # d/dp of -(2*sum(p*y)+s)/(sum(p)+sum(y)+s)
    grad = -(2.0 * gt * (total + smooth) - (2.0 * inter + smooth)) / (total + smooth) ** 2
    return LossValue(float(value), {"pred_mc": grad})


def soft_markers(pred_ma, tau_m=0.7, steepness=SOFT_MARKER_STEEPNESS):
    """Differentiable surrogate for thresholding the distance map at tau_m."""
    pred_ma = np.asarray(pred_ma, dtype=np.float64)
    return 1.0 / (1.0 + np.exp(-steepness * (pred_ma - tau_m)))


def topology_loss(pred_ma, gt_ma, pred_mc, gt_mc):
    """Distance-map MSE plus marker Dice loss; gradients kept per input."""
    lma = ma_loss(pred_ma, gt_ma)
    lmc = marker_loss(pred_mc, gt_mc)
    return LossValue(lma.value + lmc.value,
                     {"pred_ma": lma.gradients["pred_ma"],
                      "pred_mc": lmc.gradients["pred_mc"]})


def total_loss(pred_fg, gt_fg, pred_ma, gt_ma, pred_mc, gt_mc, weights=None):
    """Instance cross-entropy plus alpha-weighted topology loss."""
    if weights is None:
        weights = LossWeights()
    linst = ce_instance_loss(pred_fg, gt_fg)
    ltop = topology_loss(pred_ma, gt_ma, pred_mc, gt_mc)
    a = weights.alpha
    return LossValue(linst.value + a * ltop.value,
                     {"pred_fg": linst.gradients["pred_fg"],
                      "pred_ma": a * ltop.gradients["pred_ma"],
                      "pred_mc": a * ltop.gradients["pred_mc"]})
