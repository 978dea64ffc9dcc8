"""
TTM Model Module
The recurrent Token Turing Machine cell (read → process → write → output),
its state types, unrolling with truncated BPTT, and the model builder.
"""
import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionError, UsageError
from .memory import EraseAddWriter, Memory, MemoryReader, MemoryWriter, write_concat, zero_memory
from .params import ParamStore
from .processor import OutputHead, ProcessingUnit
from .run_config import TTMConfig
from .tensor import Tensor, stage, take_rows, zeros

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelState:
    """Recurrent state: token memory (TTM / recurrent transformer) or LSTM vectors."""

    memory: Optional[Memory] = None
    hidden: Optional[Tensor] = None
    cell: Optional[Tensor] = None
    step_index: int = 0

    def detach(self) -> "ModelState":
        return replace(
            self,
            memory=self.memory.detach() if self.memory is not None else None,
            hidden=self.hidden.detach() if self.hidden is not None else None,
            cell=self.cell.detach() if self.cell is not None else None,
        )


@dataclass
class StepOutput:
    logits: Tensor  # (B, c)
    read_weights: Optional[Tensor] = None
    write_weights: Optional[Tensor] = None


class RecurrentModel:
    """Shared surface of every architecture: embedding, step, unroll."""

    def __init__(self, cfg: TTMConfig, store: ParamStore):
        self.config = cfg
        self.store = store
        self.embedding = store.create("embedding.table", (cfg.vocab_size, cfg.d), init="normal", scale=1.0)

    def initial_state(self, batch: int) -> ModelState:
        raise NotImplementedError

    def step(self, state: ModelState, inputs: Tensor) -> Tuple[StepOutput, ModelState]:
        raise NotImplementedError

    def embed(self, symbols: np.ndarray) -> Tensor:
        """(B, n) symbol ids → (B, n, d) input tokens."""
        return take_rows(self.embedding, symbols)

    def _check_inputs(self, inputs: Tensor) -> None:
        n, d = self.config.n, self.config.d
        if inputs.ndim != 3 or inputs.shape[1:] != (n, d):
            raise DimensionError(f"Step input must be (B, {n}, {d}), got {inputs.shape}")

    def unroll(self, inputs: Sequence[Tensor], initial_state: Optional[ModelState] = None
               ) -> Tuple[List[StepOutput], ModelState]:
        """Apply ``step`` to each of the T input token sets in order."""
        if len(inputs) < 1:
            raise UsageError("unroll needs at least one step")
        state = initial_state if initial_state is not None else self.initial_state(inputs[0].shape[0])
        outputs = []
        for step_inputs in inputs:
            out, state = self.step(state, step_inputs)
            outputs.append(out)
        return outputs, state

    def unroll_segments(
        self,
        inputs: Sequence[Tensor],
        segment_length: Optional[int] = None,
        carry: str = "carry",
        initial_state: Optional[ModelState] = None,
    ) -> Tuple[List[StepOutput], ModelState]:
        """
        Truncated BPTT unroll.

        Args:
            inputs: T input token sets
            segment_length: Steps per segment (None: the configured unroll window,
                or one segment when that is unset too)
            carry: ``carry`` detaches the state and carries it into the next
                segment; ``reset`` starts every segment from the initial state
            initial_state: State before the first step

        Returns:
            Step outputs for all T steps and the final state
        """
        if carry not in ("carry", "reset"):
            raise UsageError(f"Unknown carry mode: {carry}")
        segment_length = segment_length or self.config.unroll or len(inputs)
        batch = inputs[0].shape[0]
        state = initial_state if initial_state is not None else self.initial_state(batch)
        outputs: List[StepOutput] = []
        for start in range(0, len(inputs), segment_length):
            if start > 0:
                state = state.detach() if carry == "carry" else self.initial_state(batch)
            segment_outputs, state = self.unroll(inputs[start:start + segment_length], state)
            outputs.extend(segment_outputs)
        return outputs, state

    def forward_symbols(self, symbols: np.ndarray, segment_length: Optional[int] = None,
                        carry: str = "carry") -> Tuple[List[StepOutput], ModelState]:
        """Embed a (B, T, n) symbol batch and unroll over it."""
        symbols = np.asarray(symbols)
        inputs = [self.embed(symbols[:, t, :]) for t in range(symbols.shape[1])]
        return self.unroll_segments(inputs, segment_length, carry)


class TokenTuringMachine(RecurrentModel):
    """Z = Read(M, I); O = Process(Z); M' = Write(M, O, I); Y = Output(O)."""

    def __init__(self, cfg: TTMConfig, store: ParamStore):
        super().__init__(cfg, store)
        n, m, r, d = cfg.n, cfg.m, cfg.r, cfg.d
        proc = cfg.processor
        self.reader = MemoryReader(store, cfg.summarizer, m, n, r, d, cfg.summarizer_hidden)
        self.processor = ProcessingUnit(
            store, proc.kind, proc.depth, r, d, proc.hidden_width(d), proc.heads, proc.token_hidden
        )
        self.writer = None
        self.erase_add = None
        if cfg.write in ("ttm", "no_memory"):
            self.writer = MemoryWriter(store, cfg.summarizer, m, n, r, d, cfg.summarizer_hidden)
        elif cfg.write == "erase_add":
            self.erase_add = EraseAddWriter(store, d)
        self.head = OutputHead(store, d, cfg.classes, cfg.head_pooling)
        self.memory_init = (
            store.create("memory.init", (m, d), init="zeros") if cfg.learned_memory_init else None
        )

    def initial_state(self, batch: int) -> ModelState:
        tokens = zeros((batch, self.config.m, self.config.d))
        if self.memory_init is not None:
            tokens = tokens + self.memory_init
        return ModelState(memory=Memory(tokens=tokens))

    def step(self, state: ModelState, inputs: Tensor) -> Tuple[StepOutput, ModelState]:
        self._check_inputs(inputs)
        memory = state.memory
        if memory is None or memory.tokens.shape != (inputs.shape[0], self.config.m, self.config.d):
            found = None if memory is None else memory.tokens.shape
            raise DimensionError(f"State memory {found} does not match config (B, m={self.config.m}, d)")

        with stage("read"):
            read = self.reader.read(memory.tokens, inputs)
        with stage("process"):
            outputs = self.processor.process(read.tokens)
        with stage("write"):
            new_tokens, write_weights = self._write(memory.tokens, outputs, inputs)
        with stage("head"):
            logits = self.head.output(outputs)

        new_state = ModelState(memory=memory.advance(new_tokens), step_index=state.step_index + 1)
        return StepOutput(logits, read.weights, write_weights), new_state

    def _write(self, memory: Tensor, outputs: Tensor, inputs: Tensor):
        variant = self.config.write
        if variant == "concat":
            return write_concat(memory, inputs, self.config.m), None
        if variant == "erase_add":
            return self.erase_add.write_erase_add(memory, outputs).tokens, None
        result = self.writer.write(memory, outputs, inputs)
        if variant == "no_memory":
            return zero_memory(result.tokens), result.weights
        return result.tokens, result.weights


def build_model(cfg: TTMConfig, seed: int = 0, store: Optional[ParamStore] = None) -> RecurrentModel:
    """Instantiate the architecture named by ``cfg.architecture`` (in a fresh ParamStore by default)."""
    from .baselines import LSTMBaseline, RecurrentTransformer

    store = store if store is not None else ParamStore(seed=seed)
    if cfg.architecture == "lstm":
        model = LSTMBaseline(cfg, store)
    elif cfg.architecture == "recurrent_transformer":
        model = RecurrentTransformer(cfg, store)
    else:
        model = TokenTuringMachine(cfg, store)
    logger.info(f"Built {cfg.architecture} model ({cfg.write if cfg.architecture == 'ttm' else '-'} write): "
                f"{store.num_parameters()} parameters in {len(store)} tensors")
    return model
