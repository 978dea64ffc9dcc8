"""
Optimizer Module
Adam with bias correction, cosine learning-rate schedule and global-norm clipping.
"""
import logging
import math
from typing import Dict

import numpy as np

from . import config
from .params import ParamStore

logger = logging.getLogger(__name__)


def cosine_lr(step: int, base_lr: float, total_steps: int, warmup: int = 0) -> float:
    """lr₀ · ½(1 + cos(π t / T)) after an optional linear warmup."""
    if warmup > 0 and step < warmup:
        return base_lr * (step + 1) / warmup
    span = max(total_steps - warmup, 1)
    progress = min(max(step - warmup, 0) / span, 1.0)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def learning_rate(step: int, base_lr: float, total_steps: int, schedule: str = "cosine", warmup: int = 0) -> float:
    if schedule == "constant":
        return base_lr if step >= warmup or warmup == 0 else base_lr * (step + 1) / warmup
    return cosine_lr(step, base_lr, total_steps, warmup)


def clip_grad_norm(params: ParamStore, max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``; returns the norm before clipping."""
    total = 0.0
    for _, param in params.items():
        if param.grad is not None:
            total += float(np.sum(param.grad.astype(np.float64) ** 2))
    norm = math.sqrt(total)
    if norm > max_norm > 0:
        scale = max_norm / (norm + 1e-12)
        for _, param in params.items():
            if param.grad is not None:
                param.grad = param.grad * scale
    return norm


class Adam:
    """Adam with one (m, v) moment pair per parameter."""

    def __init__(
        self,
        params: ParamStore,
        beta1: float = config.ADAM_BETA1,
        beta2: float = config.ADAM_BETA2,
        eps: float = config.ADAM_EPS,
    ):
        self.params = params
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: Dict[str, np.ndarray] = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v: Dict[str, np.ndarray] = {name: np.zeros_like(p.data) for name, p in params.items()}

    def adam_step(self, lr: float) -> None:
        """Update every parameter in place from its ``grad`` (missing grads count as zero)."""
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for name, param in self.params.items():
            grad = param.grad if param.grad is not None else np.zeros_like(param.data)
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * grad
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * grad * grad
            m_hat = self.m[name] / correction1
            v_hat = self.v[name] / correction2
            param.data -= (lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(param.dtype)
