"""
Loss Functions
Softmax and sigmoid cross-entropy with label smoothing, averaged over the batch.
"""
import numpy as np

from . import config
from .errors import DimensionError
from .tensor import Tensor, get_default_dtype, log_sigmoid, log_softmax, neg

LOSS_KINDS = ("softmax_ce", "sigmoid_ce")


def smoothed_targets(target: np.ndarray, classes: int, kind: str, label_smoothing: float) -> np.ndarray:
    """One-hot targets mixed with uniform (softmax) or 0.5 (sigmoid) at rate ε."""
    onehot = np.eye(classes)[target]
    if kind == "softmax_ce":
        return (1.0 - label_smoothing) * onehot + label_smoothing / classes
    return (1.0 - label_smoothing) * onehot + label_smoothing * 0.5


def loss(
    logits: Tensor,
    target: np.ndarray,
    kind: str = "softmax_ce",
    label_smoothing: float = config.LABEL_SMOOTHING,
) -> Tensor:
    """
    Scalar cross-entropy loss.

    Args:
        logits: (B, c) logits
        target: (B,) integer class ids in [0, c)
        kind: ``softmax_ce`` or ``sigmoid_ce``
        label_smoothing: Smoothing rate ε

    Returns:
        Mean over the batch of the per-example loss (summed over classes for sigmoid)
    """
    target = np.asarray(target, dtype=np.int64)
    if logits.ndim != 2 or target.shape != (logits.shape[0],):
        raise DimensionError(f"loss shapes disagree: logits {logits.shape}, target {target.shape}")
    classes = logits.shape[1]
    if target.size and (target.min() < 0 or target.max() >= classes):
        raise ValueError(f"Target out of range [0, {classes}): {target.min()}..{target.max()}")
    if kind not in LOSS_KINDS:
        raise ValueError(f"Unknown loss kind: {kind}")

    soft = Tensor(smoothed_targets(target, classes, kind, label_smoothing).astype(get_default_dtype()))
    batch = logits.shape[0]
    if kind == "softmax_ce":
        per_class = soft * log_softmax(logits, axis=-1)
    else:
        per_class = soft * log_sigmoid(logits) + (1.0 - soft) * log_sigmoid(neg(logits))
    return neg(per_class.sum()) * (1.0 / batch)
