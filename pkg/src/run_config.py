"""
Run Configuration
Validated schema for model, task, training and I/O settings, with canonical
JSON serialisation for manifests.
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import config
from .errors import ConfigError

logger = logging.getLogger(__name__)

NUM_SPECIAL_SYMBOLS = 4  # blank, key marker, query marker, pad


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ProcessorConfig(_Strict):
    kind: Literal["transformer", "mixer", "mlp"] = "transformer"
    depth: int = Field(config.DEFAULT_DEPTH, ge=1)
    hidden: Optional[int] = Field(None, ge=1)  # default 2d
    heads: int = Field(config.DEFAULT_HEADS, ge=1)
    token_hidden: Optional[int] = Field(None, ge=1)  # mixer, default d // 2

    def hidden_width(self, d: int) -> int:
        return self.hidden or 2 * d


class TTMConfig(_Strict):
    architecture: Literal["ttm", "lstm", "recurrent_transformer"] = "ttm"
    n: int = Field(config.DEFAULT_INPUT_TOKENS, ge=1)
    m: int = Field(config.DEFAULT_MEMORY_TOKENS, ge=1)
    r: int = Field(config.DEFAULT_READ_TOKENS, ge=1)
    d: int = Field(config.DEFAULT_CHANNELS, ge=1)
    processor: ProcessorConfig = Field(default_factory=ProcessorConfig)
    summarizer: Literal["mlp", "latent_query", "pooling"] = "mlp"
    summarizer_hidden: Optional[int] = Field(None, ge=1)
    write: Literal["ttm", "concat", "erase_add", "no_memory"] = "ttm"
    classes: int = Field(8, ge=1)
    vocab_size: int = Field(8 + NUM_SPECIAL_SYMBOLS, ge=1)
    unroll: Optional[int] = Field(None, ge=1)  # truncated-BPTT window in steps; None: whole episode
    head_pooling: Literal["mean", "first"] = "mean"
    state_tokens: int = Field(16, ge=1)  # recurrent transformer
    learned_memory_init: bool = False

    @model_validator(mode="after")
    def _check_combinations(self) -> "TTMConfig":
        uses_processor = self.architecture in ("ttm", "recurrent_transformer")
        if uses_processor and self.processor.kind == "transformer" and self.d % self.processor.heads:
            raise ValueError(f"processor.heads={self.processor.heads} must divide d={self.d}")
        if self.architecture == "ttm" and self.summarizer == "pooling":
            if self.r > self.m + self.n:
                raise ValueError(f"r={self.r} > m+n={self.m + self.n}: pooling read would leave empty groups")
        return self


class TaskConfig(_Strict):
    name: Literal["copy", "delayed_recall", "assoc_recall"] = "delayed_recall"
    steps: int = Field(8, ge=1)  # T for copy / delayed recall
    vocab: int = Field(8, ge=2)
    gap: int = Field(4, ge=0)
    pairs: int = Field(3, ge=1)
    tokens_per_step: int = Field(1, ge=1)  # copy task
    per_step_targets: bool = False

    @property
    def tokens(self) -> int:
        """Input tokens per step produced by the generator."""
        return self.tokens_per_step if self.name == "copy" else 2

    @property
    def episode_steps(self) -> int:
        return self.pairs + 1 if self.name == "assoc_recall" else self.steps

    @model_validator(mode="after")
    def _check_task(self) -> "TaskConfig":
        if self.name == "delayed_recall" and self.gap > self.steps - 1:
            raise ValueError(f"gap={self.gap} does not fit in steps={self.steps}")
        if self.name == "assoc_recall" and self.pairs > self.vocab:
            raise ValueError(f"pairs={self.pairs} exceeds vocab={self.vocab}; keys must be distinct")
        if self.name == "copy" and self.steps < 2:
            raise ValueError("copy task needs steps ≥ 2")
        return self


class TrainConfig(_Strict):
    steps: int = Field(1000, ge=0)
    batch: int = Field(config.DEFAULT_BATCH_SIZE, ge=1)
    lr: float = Field(config.DEFAULT_LR, ge=0.0)
    schedule: Literal["cosine", "constant"] = "cosine"
    warmup: int = Field(0, ge=0)
    seed: int = 0
    supervision: Literal["last", "all"] = "last"
    carry: Literal["carry", "reset"] = "carry"
    eval_interval: int = Field(100, ge=1)
    eval_episodes: int = Field(1000, ge=1)
    eval_batch: int = Field(250, ge=1)
    loss: Literal["softmax_ce", "sigmoid_ce"] = "softmax_ce"
    label_smoothing: float = Field(config.LABEL_SMOOTHING, ge=0.0, lt=1.0)
    grad_clip: Optional[float] = Field(config.GRAD_CLIP_NORM, gt=0.0)


class IOConfig(_Strict):
    output_dir: str = config.TTM_OUTPUT_DIR


def desk_model() -> TTMConfig:
    """Small TTM sized for the default delayed-recall task (two tokens per step, vocab 8)."""
    return TTMConfig(n=2, m=8, r=4, d=32, classes=8, vocab_size=8 + NUM_SPECIAL_SYMBOLS,
                     processor=ProcessorConfig(depth=1, heads=4))


class RunConfig(_Strict):
    model: TTMConfig = Field(default_factory=desk_model)
    task: TaskConfig = Field(default_factory=TaskConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    io: IOConfig = Field(default_factory=IOConfig)

    @model_validator(mode="after")
    def _check_cross_fields(self) -> "RunConfig":
        if self.model.n != self.task.tokens:
            raise ValueError(f"model.n={self.model.n} must equal the task's tokens per step ({self.task.tokens})")
        if self.model.classes != self.task.vocab:
            raise ValueError(f"model.classes={self.model.classes} must equal task.vocab={self.task.vocab}")
        if self.model.vocab_size < self.task.vocab + NUM_SPECIAL_SYMBOLS:
            raise ValueError(
                f"model.vocab_size={self.model.vocab_size} must be ≥ task.vocab + {NUM_SPECIAL_SYMBOLS}"
            )
        return self


def canonical_json(data: Union[BaseModel, Dict[str, Any]]) -> str:
    """Sorted keys, compact separators."""
    if isinstance(data, BaseModel):
        data = data.model_dump(mode="json")
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def format_validation_error(error: ValidationError) -> str:
    lines = []
    for item in error.errors():
        path = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"{path}: {item['msg']}")
    return "; ".join(lines)


def parse_run_config(data: Dict[str, Any]) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(format_validation_error(e)) from e


def load_run_config(path: Union[str, Path], overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Load a JSON run config, optionally applying dotted-path overrides.

    Args:
        path: JSON file
        overrides: e.g. {"train.seed": 3, "io.output_dir": "runs/x"}

    Returns:
        Validated RunConfig
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from e
    for dotted, value in (overrides or {}).items():
        target = data
        *parents, leaf = dotted.split(".")
        for key in parents:
            target = target.setdefault(key, {})
        target[leaf] = value
    run_config = parse_run_config(data)
    logger.info(f"Loaded run config from {path}")
    return run_config
