"""
Processing Unit Module
Token-to-token controllers (Transformer, MLPMixer, MLP) and the linear output head.
"""
import logging
import math
from typing import List

from .errors import ConfigError, DimensionError
from .layers import FeedForward, LayerNorm, Linear
from .params import ParamStore
from .tensor import Tensor, concat, matmul, softmax, transpose

logger = logging.getLogger(__name__)

PROCESSOR_KINDS = ("transformer", "mixer", "mlp")


class SelfAttention:
    """Full (non-causal) multi-head self-attention without biases."""

    def __init__(self, store: ParamStore, name: str, d: int, heads: int):
        if d % heads:
            raise ConfigError(f"{name}: d={d} is not divisible by heads={heads}")
        self.heads = heads
        self.head_dim = d // heads
        self.query = Linear(store, f"{name}.query", d, d, bias=False)
        self.key = Linear(store, f"{name}.key", d, d, bias=False)
        self.value = Linear(store, f"{name}.value", d, d, bias=False)
        self.out = Linear(store, f"{name}.out", d, d, bias=False)

    def __call__(self, x: Tensor) -> Tensor:
        q, k, v = self.query(x), self.key(x), self.value(x)
        scale = 1.0 / math.sqrt(self.head_dim)
        heads: List[Tensor] = []
        for h in range(self.heads):
            lo, hi = h * self.head_dim, (h + 1) * self.head_dim
            scores = matmul(q[:, :, lo:hi], transpose(k[:, :, lo:hi])) * scale
            heads.append(matmul(softmax(scores, axis=-1), v[:, :, lo:hi]))
        mixed = heads[0] if self.heads == 1 else concat(heads, axis=2)
        return self.out(mixed)


class TransformerBlock:
    """Pre-norm block: x + MHSA(LN(x)), then x + MLP(LN(x))."""

    def __init__(self, store: ParamStore, name: str, d: int, hidden: int, heads: int):
        self.norm1 = LayerNorm(store, f"{name}.norm1", d)
        self.attention = SelfAttention(store, f"{name}.attention", d, heads)
        self.norm2 = LayerNorm(store, f"{name}.norm2", d)
        self.mlp = FeedForward(store, f"{name}.mlp", d, hidden, d)

    def __call__(self, x: Tensor) -> Tensor:
        x = x + self.attention(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class MixerBlock:
    """Token-mixing MLP over the token axis followed by a channel-mixing MLP."""

    def __init__(self, store: ParamStore, name: str, tokens: int, d: int, token_hidden: int, hidden: int):
        self.tokens = tokens
        self.norm1 = LayerNorm(store, f"{name}.norm1", d)
        self.token_mlp = FeedForward(store, f"{name}.token_mlp", tokens, token_hidden, tokens)
        self.norm2 = LayerNorm(store, f"{name}.norm2", d)
        self.channel_mlp = FeedForward(store, f"{name}.channel_mlp", d, hidden, d)

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.tokens:
            raise ConfigError(f"Mixer block built for {self.tokens} tokens, got {x.shape[1]}")
        x = x + transpose(self.token_mlp(transpose(self.norm1(x))))
        return x + self.channel_mlp(self.norm2(x))


class MLPBlock:
    """Per-token residual MLP; no token mixing."""

    def __init__(self, store: ParamStore, name: str, d: int, hidden: int):
        self.norm = LayerNorm(store, f"{name}.norm", d)
        self.mlp = FeedForward(store, f"{name}.mlp", d, hidden, d)

    def __call__(self, x: Tensor) -> Tensor:
        return x + self.mlp(self.norm(x))


class ProcessingUnit:
    """F: (B, t, d) → (B, t, d), ``depth`` blocks of the configured kind."""

    def __init__(
        self,
        store: ParamStore,
        kind: str,
        depth: int,
        tokens: int,
        d: int,
        hidden: int,
        heads: int = 8,
        token_hidden: int = None,
        name: str = "processor",
    ):
        """
        Initialize the processing unit.

        Args:
            store: Parameter store
            kind: ``transformer``, ``mixer`` or ``mlp``
            depth: Number of blocks (≥ 1)
            tokens: Token count the unit runs over (fixed at build time for the mixer)
            d: Channels
            hidden: Channel MLP width
            heads: Attention heads (transformer)
            token_hidden: Token-mixing MLP width (mixer, default max(1, d // 2))
            name: Parameter prefix
        """
        if kind not in PROCESSOR_KINDS:
            raise ConfigError(f"Unknown processor kind: {kind}")
        if depth < 1:
            raise ConfigError(f"Processor depth must be ≥ 1, got {depth}")
        self.kind = kind
        self.tokens = tokens
        self.d = d
        token_hidden = token_hidden or max(1, d // 2)
        self.blocks = []
        for i in range(depth):
            block_name = f"{name}.block{i}"
            if kind == "transformer":
                self.blocks.append(TransformerBlock(store, block_name, d, hidden, heads))
            elif kind == "mixer":
                self.blocks.append(MixerBlock(store, block_name, tokens, d, token_hidden, hidden))
            else:
                self.blocks.append(MLPBlock(store, block_name, d, hidden))

    def process(self, Z: Tensor) -> Tensor:
        if Z.ndim != 3 or Z.shape[-1] != self.d:
            raise DimensionError(f"Processing unit expects (B, t, {self.d}), got {Z.shape}")
        x = Z
        for block in self.blocks:
            x = block(x)
        return x

    def __call__(self, Z: Tensor) -> Tensor:
        return self.process(Z)


class OutputHead:
    """Pools the output tokens (mean or first) and maps them to class logits."""

    def __init__(self, store: ParamStore, d: int, classes: int, pooling: str = "mean", name: str = "head"):
        if pooling not in ("mean", "first"):
            raise ConfigError(f"Unknown head pooling: {pooling}")
        self.pooling = pooling
        self.linear = Linear(store, name, d, classes)

    def pool(self, O: Tensor) -> Tensor:
        if self.pooling == "first":
            return O[:, 0, :]
        return O.mean(axis=1)

    def project(self, pooled: Tensor) -> Tensor:
        return self.linear(pooled)

    def output(self, O: Tensor) -> Tensor:
        """(B, r, d) → (B, c) logits."""
        return self.project(self.pool(O))

    def __call__(self, O: Tensor) -> Tensor:
        return self.output(O)
