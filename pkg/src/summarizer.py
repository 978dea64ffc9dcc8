"""
Token Summarisation Module
Maps p tokens to k tokens through learned convex combinations (MLP or latent
query importance weights) or contiguous mean pooling, plus the learnable
positional tables used for location addressing.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import CapacityError, ConfigError, DimensionError, UnsupportedVariantError
from .layers import FeedForward
from .params import ParamStore
from .tensor import Tensor, get_default_dtype, matmul, softmax, transpose

logger = logging.getLogger(__name__)

SUMMARIZER_VARIANTS = ("mlp", "latent_query", "pooling")


@dataclass
class SummaryResult:
    tokens: Tensor  # (B, k, d)
    weights: Optional[Tensor]  # (B, k, p); None for pooling


def pooling_matrix(k: int, p: int) -> np.ndarray:
    """k×p matrix averaging k contiguous groups whose sizes differ by at most one."""
    if k > p:
        raise ConfigError(f"Pooling summariser cannot produce {k} tokens from {p} (empty group)")
    matrix = np.zeros((k, p))
    for i, group in enumerate(np.array_split(np.arange(p), k)):
        matrix[i, group] = 1.0 / len(group)
    return matrix


class TokenSummarizer:
    """S_k: (B, p, d) → (B, k, d)."""

    def __init__(
        self,
        store: ParamStore,
        name: str,
        variant: str,
        k: int,
        d: int,
        hidden: Optional[int] = None,
    ):
        """
        Initialize a summarizer.

        Args:
            store: Parameter store to register weights in
            name: Parameter prefix (e.g. ``read.summarizer``)
            variant: ``mlp``, ``latent_query`` or ``pooling``
            k: Number of output tokens
            d: Channels
            hidden: MLP hidden width (mlp variant, default d)
        """
        if variant not in SUMMARIZER_VARIANTS:
            raise UnsupportedVariantError(f"Unknown summarizer variant: {variant}")
        if k < 1:
            raise ConfigError(f"{name}: k must be ≥ 1, got {k}")
        self.variant = variant
        self.k = k
        self.d = d
        self.hidden = hidden or d
        self.mlp = None
        self.query = None
        if variant == "mlp":
            # No output bias: a per-row constant cancels inside the softmax over tokens.
            self.mlp = FeedForward(store, f"{name}.mlp", d, self.hidden, k, out_bias=False)
        elif variant == "latent_query":
            self.query = store.create(f"{name}.query", (k, d), init="normal")

    def importance_weights(self, V: Tensor) -> Tensor:
        """
        Importance weights W (B, k, p); each row is a distribution over the p tokens.

        MLP variant applies the MLP per token (p×k logits, transposed); the latent
        query variant uses softmax(Q Vᵀ / √d).
        """
        self._check_input(V)
        if self.variant == "mlp":
            logits = transpose(self.mlp(V))
        elif self.variant == "latent_query":
            logits = matmul(self.query, transpose(V)) * (1.0 / math.sqrt(self.d))
        else:
            raise UnsupportedVariantError("Pooling summariser has no importance weights")
        return softmax(logits, axis=-1)

    def summarize(self, V: Tensor) -> SummaryResult:
        """Z[i] = W[i] · V, or contiguous mean pooling for the pooling variant."""
        self._check_input(V)
        if self.variant == "pooling":
            pool = Tensor(pooling_matrix(self.k, V.shape[1]).astype(get_default_dtype()))
            return SummaryResult(tokens=matmul(pool, V), weights=None)
        weights = self.importance_weights(V)
        return SummaryResult(tokens=matmul(weights, V), weights=weights)

    def __call__(self, V: Tensor) -> SummaryResult:
        return self.summarize(V)

    def _check_input(self, V: Tensor) -> None:
        if V.ndim != 3 or V.shape[-1] != self.d:
            raise DimensionError(f"Summarizer expects (B, p, {self.d}), got {V.shape}")
        if V.shape[1] < 1:
            raise DimensionError("Summarizer needs at least one input token")


class PositionalTable:
    """Learnable L×d table added to the first p rows of a token set."""

    def __init__(self, store: ParamStore, name: str, length: int, d: int):
        self.length = length
        self.table = store.create(name, (length, d), init="normal")

    def add_positions(self, V: Tensor) -> Tensor:
        p = V.shape[1]
        if p > self.length:
            raise CapacityError(f"Positional table holds {self.length} rows, got {p} tokens")
        rows = self.table if p == self.length else self.table[:p]
        return V + rows

    def __call__(self, V: Tensor) -> Tensor:
        return self.add_positions(V)
