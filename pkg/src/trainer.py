"""
Training Module
Episode batches through a bounded-queue loader, last-step (or all-step)
supervision, Adam with a cosine schedule, held-out evaluation, metrics CSV
and checkpoints.
"""
import csv
import json
import logging
import queue
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import partial
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from . import config
from .checkpoint import save_checkpoint
from .errors import DivergenceError, NumericError, UsageError
from .losses import loss as cross_entropy
from .model import RecurrentModel, build_model
from .optimizer import Adam, clip_grad_norm, learning_rate
from .run_config import RunConfig, TaskConfig, TrainConfig, canonical_json
from .tasks import IGNORE_TARGET, Episode, accuracy, collate, episode_seed, generate, generate_corpus, save_corpus
from .tensor import Tensor, concat, no_grad

logger = logging.getLogger(__name__)

TRAIN_STREAM = 0
EVAL_STREAM = 1
METRICS_HEADER = ("step", "loss", "accuracy", "lr")


@dataclass
class EvalResult:
    loss: float
    accuracy: float
    count: int
    predictions: List[int] = field(default_factory=list, repr=False)
    targets: List[int] = field(default_factory=list, repr=False)


@dataclass
class TrainResult:
    steps: int
    train_loss: float
    train_accuracy: float
    eval_loss: float
    eval_accuracy: float
    checkpoint: str
    metrics: str
    eval_corpus: str

    def to_dict(self) -> dict:
        return asdict(self)


class BatchLoader:
    """
    Yields collated (symbols, targets) training batches in a fixed order.

    A producer thread fills a bounded queue; each batch's episodes are generated
    by up to ``workers`` threads. Batch i always holds the episodes seeded by
    (seed, i·batch .. i·batch + batch − 1), so contents do not depend on ``workers``.
    """

    _DONE = object()

    def __init__(self, task: TaskConfig, batch_size: int, seed: int, num_batches: int,
                 workers: int = config.TTM_THREADS, prefetch: int = config.LOADER_PREFETCH):
        self.task = task
        self.batch_size = batch_size
        self.seed = seed
        self.num_batches = num_batches
        self.workers = max(1, min(workers, config.TTM_THREADS))
        self.queue: "queue.Queue" = queue.Queue(maxsize=max(1, prefetch))
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def batch_seeds(self, index: int) -> List[int]:
        first = index * self.batch_size
        return [episode_seed(self.seed, TRAIN_STREAM, first + j) for j in range(self.batch_size)]

    def _put(self, item) -> bool:
        while not self._stop.is_set():
            try:
                self.queue.put(item, timeout=0.1)
                return True
            except queue.Full:
                continue
        return False

    def _produce(self) -> None:
        make = partial(generate, self.task)
        try:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                for index in range(self.num_batches):
                    episodes = list(pool.map(make, self.batch_seeds(index)))
                    if not self._put(collate(episodes)):
                        return
        except Exception as e:
            logger.error(f"Batch producer failed: {e}", exc_info=True)
            self._put(e)
            return
        self._put(self._DONE)

    def __iter__(self) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
        self._stop.clear()
        self._thread = threading.Thread(target=self._produce, name="batch-producer", daemon=True)
        self._thread.start()
        try:
            while True:
                item = self.queue.get()
                if item is self._DONE:
                    return
                if isinstance(item, Exception):
                    raise item
                yield item
        finally:
            self.close()

    def close(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
            self._thread = None


def supervised_steps(targets: np.ndarray, supervision: str) -> List[int]:
    """Step indices that carry a loss: the last one, or every step with any target."""
    T = targets.shape[1]
    if supervision == "last":
        return [T - 1]
    if supervision == "all":
        return [t for t in range(T) if np.any(targets[:, t] != IGNORE_TARGET)]
    raise UsageError(f"Unknown supervision mode: {supervision}")


def episode_loss(
    model: RecurrentModel,
    symbols: np.ndarray,
    targets: np.ndarray,
    train_cfg: TrainConfig,
) -> Tuple[Tensor, np.ndarray, np.ndarray]:
    """
    Unroll the model over a batch and compute the supervised loss.

    Returns:
        Tuple of (scalar loss, predicted classes, matching targets) over the
        supervised (example, step) entries
    """
    outputs, _ = model.forward_symbols(symbols, carry=train_cfg.carry)
    steps = supervised_steps(targets, train_cfg.supervision)
    logits, labels = [], []
    for t in steps:
        rows = np.nonzero(targets[:, t] != IGNORE_TARGET)[0]
        if rows.size == 0:
            raise UsageError(f"Step {t} is supervised but has no targets")
        step_logits = outputs[t].logits if rows.size == targets.shape[0] else outputs[t].logits[rows]
        logits.append(step_logits)
        labels.append(targets[rows, t])
    stacked = logits[0] if len(logits) == 1 else concat(logits, axis=0)
    labels = np.concatenate(labels)
    value = cross_entropy(stacked, labels, train_cfg.loss, train_cfg.label_smoothing)
    predictions = np.argmax(stacked.data, axis=-1)
    return value, predictions, labels


def evaluate(model: RecurrentModel, episodes: Sequence[Episode], train_cfg: TrainConfig,
             batch_size: Optional[int] = None) -> EvalResult:
    """Loss and accuracy over a corpus, without recording a graph."""
    if not episodes:
        raise ValueError("evaluation corpus is empty")
    batch_size = batch_size or train_cfg.eval_batch
    total_loss, total_count = 0.0, 0
    predictions: List[int] = []
    labels: List[int] = []
    with no_grad():
        for start in range(0, len(episodes), batch_size):
            symbols, targets = collate(episodes[start:start + batch_size])
            value, preds, gold = episode_loss(model, symbols, targets, train_cfg)
            total_loss += float(value.data) * len(gold)
            total_count += len(gold)
            predictions.extend(int(p) for p in preds)
            labels.extend(int(g) for g in gold)
    return EvalResult(total_loss / total_count, accuracy(predictions, labels), total_count, predictions, labels)


class Trainer:
    """Owns the model, optimizer and artifact paths of one training run."""

    def __init__(self, run_config: RunConfig, output_dir: Optional[str] = None, show_progress: bool = True):
        """
        Initialize a training run.

        Args:
            run_config: Validated run configuration
            output_dir: Artifact directory (default ``run_config.io.output_dir``)
            show_progress: Show a tqdm progress bar
        """
        self.run_config = run_config
        self.train_cfg = run_config.train
        self.output_dir = Path(output_dir or run_config.io.output_dir)
        self.show_progress = show_progress
        self.model = build_model(run_config.model, seed=self.train_cfg.seed)
        self.optimizer = Adam(self.model.store)
        self.metrics_path = self.output_dir / "metrics.csv"
        self.checkpoint_dir = self.output_dir / "checkpoint"
        self.eval_corpus_path = self.output_dir / "eval_corpus.jsonl"
        self.eval_episodes = generate_corpus(
            run_config.task, self.train_cfg.eval_episodes, self.train_cfg.seed, stream=EVAL_STREAM
        )

    def train_step(self, symbols: np.ndarray, targets: np.ndarray, step: int) -> Tuple[float, float, float]:
        """One optimizer update; returns (loss, batch accuracy, learning rate)."""
        cfg = self.train_cfg
        store = self.model.store
        store.zero_grad()
        try:
            value, predictions, labels = episode_loss(self.model, symbols, targets, cfg)
        except NumericError as e:
            raise DivergenceError(f"Non-finite activations at step {step}: {e}") from e
        loss_value = float(value.data)
        if not np.isfinite(loss_value):
            raise DivergenceError(f"Non-finite loss {loss_value} at step {step}")
        value.backward()
        if cfg.grad_clip is not None:
            clip_grad_norm(store, cfg.grad_clip)
        lr = learning_rate(step, cfg.lr, cfg.steps, cfg.schedule, cfg.warmup)
        self.optimizer.adam_step(lr)
        return loss_value, accuracy(predictions, labels), lr

    def _append_metrics(self, writer, step: int, loss: float, accuracy: float, lr: float) -> None:
        writer.writerow([step, f"{loss:.8g}", f"{accuracy:.6f}", f"{lr:.8g}"])

    def train(self) -> TrainResult:
        cfg = self.train_cfg
        self.output_dir.mkdir(parents=True, exist_ok=True)
        (self.output_dir / "config.json").write_text(canonical_json(self.run_config), encoding="utf-8")
        save_corpus(self.eval_corpus_path, self.eval_episodes)
        logger.info(f"Training {self.run_config.model.architecture} on {self.run_config.task.name} "
                    f"for {cfg.steps} steps (batch {cfg.batch}, lr {cfg.lr}, seed {cfg.seed})")

        loader = BatchLoader(self.run_config.task, cfg.batch, cfg.seed, cfg.steps)
        window_loss, window_acc, window = 0.0, 0.0, 0
        last_loss, last_acc, lr = float("nan"), float("nan"), 0.0
        eval_result = None
        with self.metrics_path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(METRICS_HEADER)
            progress = tqdm(loader, total=cfg.steps, desc="train", disable=not self.show_progress)
            try:
                for step, (symbols, targets) in enumerate(progress, start=1):
                    loss_value, acc, lr = self.train_step(symbols, targets, step - 1)
                    window_loss += loss_value
                    window_acc += acc
                    window += 1
                    logger.debug(f"step {step}: loss {loss_value:.4f} acc {acc:.3f} lr {lr:.2e}")
                    progress.set_postfix({"loss": f"{loss_value:.4f}", "acc": f"{acc:.3f}", "lr": f"{lr:.2e}"})
                    if step % cfg.eval_interval == 0 or step == cfg.steps:
                        last_loss, last_acc = window_loss / window, window_acc / window
                        eval_result = evaluate(self.model, self.eval_episodes, cfg)
                        self._append_metrics(writer, step, last_loss, eval_result.accuracy, lr)
                        fh.flush()
                        logger.info(f"step {step}: train loss {last_loss:.4f}, train acc {last_acc:.3f}, "
                                    f"eval acc {eval_result.accuracy:.3f}")
                        window_loss, window_acc, window = 0.0, 0.0, 0
            except DivergenceError as e:
                logger.error(f"Training diverged: {e}")
                raise
            finally:
                progress.close()
                loader.close()

            if eval_result is None:
                eval_result = evaluate(self.model, self.eval_episodes, cfg)
                last_loss = eval_result.loss
                self._append_metrics(writer, 0, last_loss, eval_result.accuracy, 0.0)

        save_checkpoint(self.checkpoint_dir, self.run_config, self.model.store, cfg.steps, cfg.seed)
        result = TrainResult(
            steps=cfg.steps,
            train_loss=last_loss,
            train_accuracy=last_acc,
            eval_loss=eval_result.loss,
            eval_accuracy=eval_result.accuracy,
            checkpoint=str(self.checkpoint_dir),
            metrics=str(self.metrics_path),
            eval_corpus=str(self.eval_corpus_path),
        )
        (self.output_dir / "summary.json").write_text(
            json.dumps(result.to_dict(), indent=2, sort_keys=True), encoding="utf-8"
        )
        logger.info(f"Training finished: eval accuracy {eval_result.accuracy:.4f} over {eval_result.count} targets")
        return result


def train(run_config: RunConfig, output_dir: Optional[str] = None, show_progress: bool = True) -> TrainResult:
    """Run a full training job and return its summary."""
    return Trainer(run_config, output_dir, show_progress).train()
