"""
FLOPs Analyzer
Closed-form per-step operation counts for every architecture, broken down by
stage, under the same per-primitive costs the runtime op counter uses.
Counts are per example (batch size 1).
"""
import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field

from . import config
from .errors import ConfigError
from .params import ParamStore
from .processor import OutputHead, ProcessingUnit
from .run_config import ProcessorConfig, TTMConfig
from .summarizer import PositionalTable

logger = logging.getLogger(__name__)

STAGES = ("read", "process", "write", "head")

MAC = config.FLOPS_PER_MAC
ELEM = config.FLOPS_ELEMENTWISE


class ReferenceConfig(BaseModel):
    """
    Unbounded or windowed reference architectures, analyzed but never trained.

    ``causal_transformer`` attends over every token seen so far through a key/value
    cache; ``temporal_window`` re-processes the last ``window`` steps of tokens.
    """

    model_config = ConfigDict(extra="forbid")

    architecture: Literal["causal_transformer", "temporal_window"]
    n: int = Field(config.DEFAULT_INPUT_TOKENS, ge=1)
    d: int = Field(config.DEFAULT_CHANNELS, ge=1)
    processor: ProcessorConfig = Field(default_factory=ProcessorConfig)
    classes: int = Field(8, ge=1)
    vocab_size: int = Field(12, ge=1)
    window: int = Field(4, ge=1)


Descriptor = Union[TTMConfig, ReferenceConfig]


@dataclass
class CostReport:
    label: str
    architecture: str
    t: int
    stages: Dict[str, int]
    params: int
    cost_fn: Callable[[int], Dict[str, int]] = field(repr=False, compare=False, default=None)

    @property
    def total(self) -> int:
        return sum(self.stages.values())

    def per_step_flops(self, t: int) -> int:
        """Total per-step count at step index ``t``."""
        return sum(self.cost_fn(t).values())

    def to_row(self) -> Dict[str, object]:
        row = {"label": self.label, "architecture": self.architecture, "t": self.t}
        row.update({name: self.stages[name] for name in STAGES})
        row.update({"total": self.total, "params": self.params})
        return row


# ---------------------------------------------------------------------------
# Primitive costs (mirror the runtime primitives)
# ---------------------------------------------------------------------------

def linear_flops(rows: int, d_in: int, d_out: int, bias: bool = True) -> int:
    return MAC * rows * d_in * d_out + (ELEM * rows * d_out if bias else 0)


def feedforward_flops(rows: int, d_in: int, hidden: int, d_out: int, out_bias: bool = True) -> int:
    return (linear_flops(rows, d_in, hidden) + config.FLOPS_GELU * rows * hidden
            + linear_flops(rows, hidden, d_out, bias=out_bias))


def mean_flops(rows: int, d: int) -> int:
    return ELEM * (rows * d + d)


def summarizer_flops(variant: str, p: int, k: int, d: int, hidden: Optional[int] = None) -> int:
    """Cost of summarising p tokens into k."""
    mix = MAC * k * p * d
    if variant == "mlp":
        return feedforward_flops(p, d, hidden or d, k, out_bias=False) + config.FLOPS_SOFTMAX * k * p + mix
    if variant == "latent_query":
        return MAC * k * d * p + ELEM * k * p + config.FLOPS_SOFTMAX * k * p + mix
    if variant == "pooling":
        return mix
    raise ConfigError(f"Unknown summarizer variant: {variant}")


def transformer_block_flops(t: int, d: int, hidden: int, heads: int, context: Optional[int] = None) -> int:
    """
    One pre-norm transformer block over t query tokens attending to ``context``
    keys (default t).
    """
    L = t if context is None else context
    norms = 2 * config.FLOPS_LAYER_NORM * t * d
    projections = 4 * linear_flops(t, d, d, bias=False)
    attention = MAC * t * L * d + ELEM * heads * t * L + config.FLOPS_SOFTMAX * heads * t * L + MAC * t * L * d
    residuals = 2 * ELEM * t * d
    return norms + projections + attention + residuals + feedforward_flops(t, d, hidden, d)


def mixer_block_flops(t: int, d: int, hidden: int, token_hidden: int) -> int:
    norms = 2 * config.FLOPS_LAYER_NORM * t * d
    residuals = 2 * ELEM * t * d
    return norms + feedforward_flops(d, t, token_hidden, t) + residuals + feedforward_flops(t, d, hidden, d)


def mlp_block_flops(t: int, d: int, hidden: int) -> int:
    return config.FLOPS_LAYER_NORM * t * d + feedforward_flops(t, d, hidden, d) + ELEM * t * d


def processor_flops(proc: ProcessorConfig, t: int, d: int) -> int:
    hidden = proc.hidden_width(d)
    if proc.kind == "transformer":
        block = transformer_block_flops(t, d, hidden, proc.heads)
    elif proc.kind == "mixer":
        block = mixer_block_flops(t, d, hidden, proc.token_hidden or max(1, d // 2))
    elif proc.kind == "mlp":
        block = mlp_block_flops(t, d, hidden)
    else:
        raise ConfigError(f"Unknown processor kind: {proc.kind}")
    return proc.depth * block


def head_flops(pooling: str, tokens: int, d: int, classes: int) -> int:
    pooled = mean_flops(tokens, d) if pooling == "mean" else 0
    return pooled + linear_flops(1, d, classes)


def erase_add_flops(m: int, r: int, d: int) -> int:
    """r sequential erase-and-add writes into m memory tokens."""
    addressing = linear_flops(1, d, d, bias=False) + MAC * m * d + ELEM * m + config.FLOPS_SOFTMAX * m
    vectors = 2 * linear_flops(1, d, d, bias=False) + ELEM * d
    update = MAC * m * d + 2 * ELEM * m * d + MAC * m * d + ELEM * m * d
    return r * (addressing + vectors + update)


# ---------------------------------------------------------------------------
# Per-architecture stage costs
# ---------------------------------------------------------------------------

def _ttm_stages(cfg: TTMConfig) -> Dict[str, int]:
    n, m, r, d = cfg.n, cfg.m, cfg.r, cfg.d
    read = ELEM * (m + n) * d + summarizer_flops(cfg.summarizer, m + n, r, d, cfg.summarizer_hidden)
    if cfg.write in ("ttm", "no_memory"):
        write = ELEM * (m + r + n) * d + summarizer_flops(cfg.summarizer, m + r + n, m, d, cfg.summarizer_hidden)
    elif cfg.write == "erase_add":
        write = erase_add_flops(m, r, d)
    elif cfg.write == "concat":
        write = 0
    else:
        raise ConfigError(f"Unknown write variant: {cfg.write}")
    return {
        "read": read,
        "process": processor_flops(cfg.processor, r, d),
        "write": write,
        "head": head_flops(cfg.head_pooling, r, d, cfg.classes),
    }


def _lstm_stages(cfg: TTMConfig) -> Dict[str, int]:
    d = cfg.d
    gates = linear_flops(1, 2 * d, 4 * d)
    # three sigmoids, two tanh, three products, one sum
    cell = ELEM * 9 * d
    return {
        "read": mean_flops(cfg.n, d),
        "process": gates + cell,
        "write": 0,
        "head": linear_flops(1, d, cfg.classes),
    }


def _recurrent_transformer_stages(cfg: TTMConfig) -> Dict[str, int]:
    tokens = cfg.state_tokens + cfg.n
    return {
        "read": ELEM * tokens * cfg.d,
        "process": processor_flops(cfg.processor, tokens, cfg.d),
        "write": 0,
        "head": head_flops(cfg.head_pooling, cfg.n, cfg.d, cfg.classes),
    }


def _causal_stages(ref: ReferenceConfig, t: int) -> Dict[str, int]:
    """Step t of a causal transformer with a key/value cache: n new tokens attend to t·n."""
    proc = ref.processor
    n, d = ref.n, ref.d
    block = transformer_block_flops(n, d, proc.hidden_width(d), proc.heads, context=t * n)
    return {
        "read": ELEM * n * d,
        "process": proc.depth * block,
        "write": 0,
        "head": head_flops("mean", n, d, ref.classes),
    }


def _window_stages(ref: ReferenceConfig) -> Dict[str, int]:
    tokens = ref.window * ref.n
    return {
        "read": ELEM * tokens * ref.d,
        "process": processor_flops(ref.processor, tokens, ref.d),
        "write": 0,
        "head": head_flops("mean", tokens, ref.d, ref.classes),
    }


def count_parameters(descriptor: Descriptor) -> int:
    """Parameter count of the architecture, instantiated in a shape-only store."""
    store = ParamStore(shape_only=True)
    if isinstance(descriptor, TTMConfig):
        from .model import build_model

        build_model(descriptor, store=store)
    else:
        proc = descriptor.processor
        d = descriptor.d
        tokens = descriptor.n if descriptor.architecture == "causal_transformer" else descriptor.window * descriptor.n
        store.create("embedding.table", (descriptor.vocab_size, d), init="zeros")
        if descriptor.architecture == "temporal_window":
            PositionalTable(store, "window.positions", tokens, d)
        ProcessingUnit(store, proc.kind, proc.depth, tokens, d, proc.hidden_width(d), proc.heads, proc.token_hidden)
        OutputHead(store, d, descriptor.classes, "mean")
    return store.num_parameters()


def default_label(descriptor: Descriptor) -> str:
    arch = descriptor.architecture
    if arch == "ttm":
        return f"ttm-{descriptor.processor.kind}-{descriptor.write}(n={descriptor.n})"
    if arch in ("recurrent_transformer", "temporal_window", "causal_transformer"):
        return f"{arch}-{descriptor.processor.kind}(n={descriptor.n})"
    return f"{arch}(n={descriptor.n})"


def _stage_fn(descriptor: Descriptor) -> Callable[[int], Dict[str, int]]:
    arch = descriptor.architecture
    if arch == "ttm":
        return lambda t: _ttm_stages(descriptor)
    if arch == "lstm":
        return lambda t: _lstm_stages(descriptor)
    if arch == "recurrent_transformer":
        return lambda t: _recurrent_transformer_stages(descriptor)
    if arch == "causal_transformer":
        if descriptor.processor.kind != "transformer":
            raise ConfigError("causal_transformer reference needs a transformer processor")
        return lambda t: _causal_stages(descriptor, t)
    if arch == "temporal_window":
        return lambda t: _window_stages(descriptor)
    raise ConfigError(f"Unknown architecture: {arch}")


def count_flops(descriptor: Descriptor, t: int = 1, label: Optional[str] = None,
                params: Optional[int] = None) -> CostReport:
    """
    Per-step cost report at step index t (1-based).

    Args:
        descriptor: TTMConfig (ttm, lstm, recurrent_transformer) or ReferenceConfig
        t: Step index
        label: Row label (default derived from the descriptor)
        params: Precomputed parameter count (skips instantiation)

    Returns:
        CostReport with the stage breakdown and parameter count
    """
    if t < 1:
        raise ConfigError(f"Step index must be ≥ 1, got {t}")
    cost_fn = _stage_fn(descriptor)
    stages = cost_fn(t)
    if params is None:
        params = count_parameters(descriptor)
    return CostReport(label or default_label(descriptor), descriptor.architecture, t, stages, params, cost_fn)


def compare(descriptors: Sequence[Tuple[str, Descriptor]], steps: Sequence[int] = (1,)) -> List[CostReport]:
    """
    Cost reports for every (label, descriptor) at every step index, ranked
    by total FLOPs within each step index (stable for ties).
    """
    reports: List[CostReport] = []
    for label, descriptor in descriptors:
        params = count_parameters(descriptor)
        for t in steps:
            reports.append(count_flops(descriptor, t, label=label, params=params))
    reports.sort(key=lambda rep: (rep.t, rep.total))
    logger.info(f"Compared {len(descriptors)} architectures at steps {list(steps)}")
    return reports


def ranking_csv(reports: Sequence[CostReport]) -> str:
    """CSV with one row per report and a rank column (1 = cheapest at that step)."""
    buffer = io.StringIO()
    columns = ["rank", "label", "architecture", "t", *STAGES, "total", "params"]
    writer = csv.DictWriter(buffer, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    rank_at: Dict[int, int] = {}
    for rep in reports:
        rank_at[rep.t] = rank_at.get(rep.t, 0) + 1
        writer.writerow({"rank": rank_at[rep.t], **rep.to_row()})
    return buffer.getvalue()


def check_ordering(reports: Sequence[CostReport], expected: Sequence[str], t: Optional[int] = None) -> bool:
    """True when the labels in ``expected`` have strictly increasing totals (at step t)."""
    totals = {rep.label: rep.total for rep in reports if t is None or rep.t == t}
    missing = [label for label in expected if label not in totals]
    if missing:
        raise ConfigError(f"No report for: {missing}")
    values = [totals[label] for label in expected]
    return all(a < b for a, b in zip(values, values[1:]))


def assert_ordering(reports: Sequence[CostReport], expected: Sequence[str], t: Optional[int] = None) -> None:
    if not check_ordering(reports, expected, t):
        found = {rep.label: rep.total for rep in reports if t is None or rep.t == t}
        raise AssertionError(f"Expected increasing FLOPs for {list(expected)}, got {found}")
