"""
Memory Interface Module
TTM read and write operators over token memory, plus the alternative write
mechanisms (FIFO concatenation, erase-and-add, memory-less ablation).
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import DimensionError
from .layers import Linear
from .params import ParamStore
from .summarizer import PositionalTable, TokenSummarizer
from .tensor import Tensor, concat, matmul, sigmoid, softmax, transpose, zeros

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Memory:
    """Memory snapshot M^t: (B, m, d) tokens and the step index t."""

    tokens: Tensor
    step_index: int = 0

    @property
    def m(self) -> int:
        return self.tokens.shape[1]

    @property
    def d(self) -> int:
        return self.tokens.shape[2]

    def advance(self, tokens: Tensor) -> "Memory":
        return replace(self, tokens=tokens, step_index=self.step_index + 1)

    def detach(self) -> "Memory":
        return replace(self, tokens=self.tokens.detach())

    def to_numpy(self) -> np.ndarray:
        return self.tokens.data


@dataclass
class ReadResult:
    tokens: Tensor  # Z: (B, r, d)
    weights: Optional[Tensor] = None  # (B, r, m+n)


@dataclass
class WriteResult:
    tokens: Tensor  # M': (B, m, d)
    weights: Optional[Tensor] = None


def _check_channels(*tensors: Tensor) -> None:
    shapes = [t.shape for t in tensors]
    if any(t.ndim != 3 for t in tensors):
        raise DimensionError(f"Memory operands must be (B, tokens, d), got {shapes}")
    if len({s[0] for s in shapes}) != 1 or len({s[2] for s in shapes}) != 1:
        raise DimensionError(f"Batch/channel mismatch between memory operands: {shapes}")


class MemoryReader:
    """Z = S_r([M ‖ I] + E_read)."""

    def __init__(self, store: ParamStore, variant: str, m: int, n: int, r: int, d: int,
                 hidden: Optional[int] = None, name: str = "read"):
        self.m, self.n, self.r = m, n, r
        self.positions = PositionalTable(store, f"{name}.positions", m + n, d)
        self.summarizer = TokenSummarizer(store, f"{name}.summarizer", variant, r, d, hidden)
        if r > m + n:
            logger.warning(f"Read produces r={r} tokens from only m+n={m + n}")

    def read(self, memory: Tensor, inputs: Tensor) -> ReadResult:
        _check_channels(memory, inputs)
        pool = self.positions.add_positions(concat([memory, inputs], axis=1))
        summary = self.summarizer.summarize(pool)
        return ReadResult(tokens=summary.tokens, weights=summary.weights)


class MemoryWriter:
    """M' = S_m([M ‖ O ‖ I] + E_write); output always has exactly m tokens."""

    def __init__(self, store: ParamStore, variant: str, m: int, n: int, r: int, d: int,
                 hidden: Optional[int] = None, name: str = "write"):
        self.m, self.n, self.r = m, n, r
        self.positions = PositionalTable(store, f"{name}.positions", m + r + n, d)
        self.summarizer = TokenSummarizer(store, f"{name}.summarizer", variant, m, d, hidden)

    def write(self, memory: Tensor, outputs: Tensor, inputs: Tensor) -> WriteResult:
        _check_channels(memory, outputs, inputs)
        pool = self.positions.add_positions(concat([memory, outputs, inputs], axis=1))
        summary = self.summarizer.summarize(pool)
        return WriteResult(tokens=summary.tokens, weights=summary.weights)


def write_concat(memory: Tensor, inputs: Tensor, capacity: int) -> Tensor:
    """
    Append the input tokens and keep the newest ``capacity`` tokens (FIFO).

    Evicted tokens leave the graph; nothing is learned.
    """
    _check_channels(memory, inputs)
    if memory.shape[1] == 0:
        combined = inputs
    else:
        combined = concat([memory, inputs], axis=1)
    overflow = combined.shape[1] - capacity
    if overflow > 0:
        combined = combined[:, overflow:, :]
    return combined


def erase_add_update(memory: Tensor, address: Tensor, erase: Tensor, add: Tensor) -> Tensor:
    """
    M ∘ (1 − w eᵀ) + w aᵀ for one write head.

    Args:
        memory: (B, m, d)
        address: (B, m, 1) address weights
        erase: (B, 1, d) erase vector in (0, 1)
        add: (B, 1, d) add vector
    """
    return memory * (1.0 - matmul(address, erase)) + matmul(address, add)


class EraseAddWriter:
    """Sequential erase-and-add writes driven by each output token."""

    def __init__(self, store: ParamStore, d: int, name: str = "write.erase_add"):
        self.d = d
        self.key = Linear(store, f"{name}.key", d, d, bias=False)
        self.erase = Linear(store, f"{name}.erase", d, d, bias=False)
        self.add = Linear(store, f"{name}.add", d, d, bias=False)

    def write_erase_add(self, memory: Tensor, outputs: Tensor) -> WriteResult:
        _check_channels(memory, outputs)
        scale = 1.0 / math.sqrt(self.d)
        for j in range(outputs.shape[1]):
            token = outputs[:, j:j + 1, :]
            key = self.key(token)
            address = softmax(matmul(memory, transpose(key)) * scale, axis=1)
            erase = sigmoid(self.erase(token))
            memory = erase_add_update(memory, address, erase, self.add(token))
        return WriteResult(tokens=memory)


def zero_memory(memory: Tensor) -> Tensor:
    """All-zero memory of the same shape, disconnected from the graph."""
    return zeros(memory.shape)
