"""
Synthetic Tasks Module
Episode generators (copy, delayed recall, associative recall) that isolate
external-memory capability, corpus I/O and batch collation.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigError, DimensionError
from .run_config import TaskConfig

logger = logging.getLogger(__name__)

IGNORE_TARGET = -1


def blank_symbol(vocab: int) -> int:
    return vocab


def key_symbol(vocab: int) -> int:
    return vocab + 1


def query_symbol(vocab: int) -> int:
    return vocab + 2


def pad_symbol(vocab: int) -> int:
    return vocab + 3


@dataclass
class Episode:
    """T steps of n symbol ids, a target per step (IGNORE_TARGET where unsupervised) and metadata."""

    steps: List[List[int]]
    targets: List[int]
    meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def length(self) -> int:
        return len(self.steps)

    @property
    def final_target(self) -> int:
        return self.targets[-1]

    def to_json(self) -> str:
        return json.dumps({"steps": self.steps, "targets": self.targets, "meta": self.meta}, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "Episode":
        record = json.loads(line)
        return cls(steps=record["steps"], targets=record["targets"], meta=record.get("meta", {}))


def episode_seed(base_seed: int, *keys: int) -> int:
    """Deterministic 32-bit seed derived from a base seed and integer keys."""
    return int(np.random.SeedSequence([base_seed, *keys]).generate_state(1)[0])


def gen_copy(T: int, n: int, vocab: int, seed: int, per_step: bool = False) -> Episode:
    """
    Random symbols for the first T//2 steps, blank steps after.

    The final-step target is the first symbol shown at step 1. With
    ``per_step`` every blank step j targets the first symbol of presentation step j.
    """
    if vocab < 2:
        raise ConfigError(f"copy task needs vocab ≥ 2, got {vocab}")
    if T < 2:
        raise ConfigError(f"copy task needs T ≥ 2, got {T}")
    rng = np.random.default_rng(seed)
    shown = max(1, T // 2)
    presented = rng.integers(vocab, size=(shown, n))
    steps = [row.tolist() for row in presented] + [[blank_symbol(vocab)] * n for _ in range(T - shown)]
    targets = [IGNORE_TARGET] * T
    if per_step:
        for j in range(T - shown):
            targets[shown + j] = int(presented[j % shown, 0])
    else:
        targets[-1] = int(presented[0, 0])
    meta = {"task": "copy", "seed": int(seed), "vocab": vocab, "recall_gap": T - 1}
    return Episode(steps=steps, targets=targets, meta=meta)


def gen_delayed_recall(T: int, gap: int, vocab: int, seed: int) -> Episode:
    """
    Key symbol (tagged with the key marker) at step t₀ = T−1−gap, query at
    step t₀+gap = T−1, distractors elsewhere. Every step holds two tokens:
    (marker, symbol). For gap ≥ 1 the query step never shows the key.
    """
    if vocab < 2:
        raise ConfigError(f"delayed recall needs vocab ≥ 2, got {vocab}")
    if not 0 <= gap <= T - 1:
        raise ConfigError(f"gap={gap} must lie in [0, T-1={T - 1}]")
    rng = np.random.default_rng(seed)
    t0 = T - 1 - gap
    key = int(rng.integers(vocab))
    steps = [[blank_symbol(vocab), int(s)] for s in rng.integers(vocab, size=T)]
    steps[t0] = [key_symbol(vocab), key]
    if gap == 0:
        steps[t0] = [query_symbol(vocab), key]
    else:
        distractor = int(rng.integers(vocab - 1))
        if distractor >= key:
            distractor += 1
        steps[T - 1] = [query_symbol(vocab), distractor]
    targets = [IGNORE_TARGET] * T
    targets[t0 + gap] = key
    meta = {"task": "delayed_recall", "seed": int(seed), "vocab": vocab, "recall_gap": gap, "t0": t0}
    return Episode(steps=steps, targets=targets, meta=meta)


def gen_assoc_recall(pairs: int, vocab: int, seed: int) -> Episode:
    """``pairs`` distinct (key, value) steps, then a query key; target is its value."""
    if pairs > vocab:
        raise ConfigError(f"pairs={pairs} exceeds vocab={vocab}; keys must be distinct")
    rng = np.random.default_rng(seed)
    keys = rng.choice(vocab, size=pairs, replace=False)
    values = rng.integers(vocab, size=pairs)
    asked = int(rng.integers(pairs))
    steps = [[int(k), int(v)] for k, v in zip(keys, values)]
    steps.append([query_symbol(vocab), int(keys[asked])])
    targets = [IGNORE_TARGET] * (pairs + 1)
    targets[-1] = int(values[asked])
    meta = {"task": "assoc_recall", "seed": int(seed), "vocab": vocab, "recall_gap": pairs - asked, "pairs": pairs}
    return Episode(steps=steps, targets=targets, meta=meta)


def generate(task: TaskConfig, seed: int) -> Episode:
    """Dispatch on ``task.name``."""
    if task.name == "copy":
        return gen_copy(task.steps, task.tokens_per_step, task.vocab, seed, per_step=task.per_step_targets)
    if task.name == "delayed_recall":
        return gen_delayed_recall(task.steps, task.gap, task.vocab, seed)
    if task.name == "assoc_recall":
        return gen_assoc_recall(task.pairs, task.vocab, seed)
    raise ConfigError(f"Unknown task: {task.name}")


def generate_corpus(task: TaskConfig, count: int, base_seed: int, stream: int = 0) -> List[Episode]:
    return [generate(task, episode_seed(base_seed, stream, i)) for i in range(count)]


def accuracy(predictions: Sequence[int], targets: Sequence[int]) -> float:
    """Fraction of matching entries."""
    predictions = np.asarray(predictions)
    targets = np.asarray(targets)
    if targets.size == 0:
        raise ValueError("accuracy of an empty set is undefined")
    if predictions.shape != targets.shape:
        raise DimensionError(f"predictions {predictions.shape} vs targets {targets.shape}")
    return float(np.mean(predictions == targets))


def collate(episodes: Sequence[Episode]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Stack episodes into arrays.

    Returns:
        symbols (B, T, n) int64 (ragged steps padded with the pad symbol) and
        targets (B, T) int64
    """
    if not episodes:
        raise ValueError("cannot collate an empty batch")
    lengths = {ep.length for ep in episodes}
    if len(lengths) != 1:
        raise DimensionError(f"episodes in a batch must share T, got {sorted(lengths)}")
    T = lengths.pop()
    n = max(len(step) for ep in episodes for step in ep.steps)
    symbols = np.empty((len(episodes), T, n), dtype=np.int64)
    for b, ep in enumerate(episodes):
        pad = pad_symbol(int(ep.meta.get("vocab", 0)))
        for t, step in enumerate(ep.steps):
            symbols[b, t, :len(step)] = step
            symbols[b, t, len(step):] = pad
    targets = np.asarray([ep.targets for ep in episodes], dtype=np.int64)
    return symbols, targets


def save_corpus(path: Union[str, Path], episodes: Iterable[Episode]) -> int:
    """Write one JSON object per line; returns the episode count."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8") as fh:
        for episode in episodes:
            fh.write(episode.to_json() + "\n")
            count += 1
    logger.info(f"Wrote {count} episodes to {path}")
    return count


def load_corpus(path: Union[str, Path]) -> List[Episode]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Corpus not found: {path}")
    with path.open("r", encoding="utf-8") as fh:
        episodes = [Episode.from_json(line) for line in fh if line.strip()]
    logger.info(f"Loaded {len(episodes)} episodes from {path}")
    return episodes
