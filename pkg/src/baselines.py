"""
Baseline Recurrent Cells
LSTM over mean-pooled input tokens, and a recurrent transformer that carries
s state tokens alongside the n input tokens.
"""
import logging
from typing import Tuple

from .errors import DimensionError
from .layers import Linear
from .memory import Memory
from .model import ModelState, RecurrentModel, StepOutput
from .params import ParamStore
from .processor import OutputHead, ProcessingUnit
from .run_config import TTMConfig
from .summarizer import PositionalTable
from .tensor import Tensor, concat, sigmoid, stage, tanh, zeros

logger = logging.getLogger(__name__)


class LSTMBaseline(RecurrentModel):
    """Standard LSTM cell (hidden size d) over the mean of each step's input tokens."""

    def __init__(self, cfg: TTMConfig, store: ParamStore):
        super().__init__(cfg, store)
        d = cfg.d
        self.gates = Linear(store, "lstm.gates", 2 * d, 4 * d)
        self.head = OutputHead(store, d, cfg.classes, cfg.head_pooling)

    def initial_state(self, batch: int) -> ModelState:
        d = self.config.d
        return ModelState(hidden=zeros((batch, d)), cell=zeros((batch, d)))

    def lstm_step(self, state: ModelState, pooled_input: Tensor) -> Tuple[Tensor, ModelState]:
        """
        One LSTM update on a (B, d) pooled input.

        Returns:
            Tuple of (logits (B, c), next state)
        """
        d = self.config.d
        if state.hidden is None or state.hidden.shape != pooled_input.shape:
            raise DimensionError(f"LSTM state does not match input {pooled_input.shape}")
        with stage("process"):
            gates = self.gates(concat([pooled_input, state.hidden], axis=1))
            i = sigmoid(gates[:, 0:d])
            f = sigmoid(gates[:, d:2 * d])
            o = sigmoid(gates[:, 2 * d:3 * d])
            g = tanh(gates[:, 3 * d:4 * d])
            cell = f * state.cell + i * g
            hidden = o * tanh(cell)
        with stage("head"):
            logits = self.head.project(hidden)
        return logits, ModelState(hidden=hidden, cell=cell, step_index=state.step_index + 1)

    def step(self, state: ModelState, inputs: Tensor) -> Tuple[StepOutput, ModelState]:
        self._check_inputs(inputs)
        with stage("read"):
            pooled = inputs.mean(axis=1)
        logits, new_state = self.lstm_step(state, pooled)
        return StepOutput(logits), new_state


class RecurrentTransformer(RecurrentModel):
    """Processing unit over [state ‖ input] tokens; the first s outputs become the next state."""

    def __init__(self, cfg: TTMConfig, store: ParamStore):
        super().__init__(cfg, store)
        s, n, d = cfg.state_tokens, cfg.n, cfg.d
        proc = cfg.processor
        self.positions = PositionalTable(store, "recurrent.positions", s + n, d)
        self.processor = ProcessingUnit(
            store, proc.kind, proc.depth, s + n, d, proc.hidden_width(d), proc.heads, proc.token_hidden
        )
        self.head = OutputHead(store, d, cfg.classes, cfg.head_pooling)

    def initial_state(self, batch: int) -> ModelState:
        return ModelState(memory=Memory(tokens=zeros((batch, self.config.state_tokens, self.config.d))))

    def recurrent_transformer_step(self, state_tokens: Tensor, inputs: Tensor) -> Tuple[Tensor, Tensor]:
        """
        Returns:
            Tuple of (logits (B, c), next state tokens (B, s, d))
        """
        s = self.config.state_tokens
        if state_tokens.ndim != 3 or state_tokens.shape[1:] != (s, self.config.d):
            raise DimensionError(f"State tokens must be (B, {s}, {self.config.d}), got {state_tokens.shape}")
        with stage("read"):
            tokens = self.positions.add_positions(concat([state_tokens, inputs], axis=1))
        with stage("process"):
            out = self.processor.process(tokens)
        with stage("write"):
            next_state = out[:, :s, :]
        with stage("head"):
            logits = self.head.output(out[:, s:, :])
        return logits, next_state

    def step(self, state: ModelState, inputs: Tensor) -> Tuple[StepOutput, ModelState]:
        self._check_inputs(inputs)
        logits, next_tokens = self.recurrent_transformer_step(state.memory.tokens, inputs)
        new_state = ModelState(memory=state.memory.advance(next_tokens), step_index=state.step_index + 1)
        return StepOutput(logits), new_state
