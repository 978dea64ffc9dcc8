"""
Gradient Checker
Central finite differences against the analytic gradients of a ParamStore.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import config
from .errors import UsageError
from .params import ParamStore
from .tensor import Tensor, get_default_dtype, no_grad

logger = logging.getLogger(__name__)


@dataclass
class GradCheckReport:
    max_rel_err: float
    worst_param: Optional[str]
    passed: bool
    tol: float
    checked: int
    total: int = 0
    failure: Optional[str] = None

    @property
    def sampled(self) -> bool:
        return self.checked < self.total

    def to_dict(self) -> dict:
        return {
            "max_rel_err": self.max_rel_err,
            "worst_param": self.worst_param,
            "passed": self.passed,
            "tol": self.tol,
            "checked": self.checked,
            "total": self.total,
            "sampled": self.sampled,
            "failure": self.failure,
        }


def relative_error(analytic: float, numeric: float, floor: float = config.GRADCHECK_FLOOR) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def perturb_parameters(params: ParamStore, scale: float = config.GRADCHECK_PARAM_SCALE, seed: int = 0) -> None:
    """
    Add N(0, scale²) noise to every parameter in place.

    At initialisation the read tokens are near-identical and attention is
    near-uniform, so query/key gradients sit below finite-difference
    resolution; a model-level check runs from the perturbed point instead.
    """
    rng = np.random.default_rng(seed)
    for _, param in params.items():
        param.data += rng.normal(0.0, scale, size=param.shape).astype(param.dtype)


def grad_check(
    loss_fn: Callable[[], Tensor],
    params: ParamStore,
    eps: float = config.GRADCHECK_EPS,
    tol: float = config.GRADCHECK_TOL,
    max_entries: Optional[int] = None,
    seed: int = 0,
) -> GradCheckReport:
    """
    Compare analytic gradients with central finite differences.

    Args:
        loss_fn: Zero-argument callable recomputing the scalar loss from ``params``
        params: Parameters to check (all must be 64-bit)
        eps: Finite-difference step
        tol: Pass threshold on the maximum relative error
        max_entries: Check at most this many entries per tensor (sampled
            deterministically); None checks every entry
        seed: Sampling seed

    Returns:
        GradCheckReport with the worst relative error and the parameter holding it
    """
    if get_default_dtype() != np.float64 or any(p.dtype != np.float64 for _, p in params.items()):
        raise UsageError("grad_check requires 64-bit mode (use tensor.precision(np.float64))")

    total = params.num_parameters()
    params.zero_grad()
    loss = loss_fn()
    if not np.isfinite(loss.data).all():
        return GradCheckReport(float("inf"), None, False, tol, 0, total, failure="non-finite loss at base point")
    loss.backward()
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    }

    rng = np.random.default_rng(seed)
    max_err, worst, checked = 0.0, None, 0
    for name, param in params.items():
        flat = param.data.reshape(-1)
        grad_flat = analytic[name].reshape(-1)
        indices = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            indices = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        for i in indices:
            original = flat[i]
            with no_grad():
                flat[i] = original + eps
                loss_plus = float(loss_fn().data)
                flat[i] = original - eps
                loss_minus = float(loss_fn().data)
            flat[i] = original
            if not (math.isfinite(loss_plus) and math.isfinite(loss_minus)):
                logger.error(f"Non-finite loss while probing {name}[{i}]")
                return GradCheckReport(float("inf"), name, False, tol, checked, total,
                                       failure=f"non-finite loss while probing {name}[{i}]")
            numeric = (loss_plus - loss_minus) / (2.0 * eps)
            err = relative_error(float(grad_flat[i]), numeric)
            checked += 1
            if err > max_err:
                max_err, worst = err, name

    passed = max_err <= tol
    logger.info(f"Gradient check: {checked} of {total} entries, max rel err {max_err:.3e} "
                f"({worst}), {'PASS' if passed else 'FAIL'}")
    return GradCheckReport(max_err, worst, passed, tol, checked, total)
