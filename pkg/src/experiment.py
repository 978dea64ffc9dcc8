"""
Experiment Runner Module
One method per CLI subcommand: corpus generation, training, evaluation,
gradient checking, FLOP reports, plots and memory dumps.
"""
import csv
import json
import logging
from itertools import product
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from . import config
from .checkpoint import load_checkpoint
from .errors import ConfigError, UsageError
from .flops import CostReport, Descriptor, ReferenceConfig, compare, ranking_csv
from .gradcheck import GradCheckReport, grad_check, perturb_parameters
from .model import RecurrentModel, build_model
from .plotting import plot_metrics
from .processor import PROCESSOR_KINDS
from .run_config import RunConfig, TTMConfig, format_validation_error, load_run_config
from .serialization import save_memory_snapshot
from .summarizer import SUMMARIZER_VARIANTS
from .tasks import collate, generate_corpus, load_corpus, save_corpus
from .tensor import no_grad, precision
from .trainer import EVAL_STREAM, TrainResult, episode_loss, evaluate, train

logger = logging.getLogger(__name__)

WRITE_VARIANTS = ("ttm", "concat", "erase_add", "no_memory")
GRADCHECK_BATCH = 2


def variant_matrix(base: TTMConfig) -> List[Tuple[str, TTMConfig]]:
    """Every summarizer × processor × write combination on top of ``base``."""
    variants = []
    for summarizer, kind, write in product(SUMMARIZER_VARIANTS, PROCESSOR_KINDS, WRITE_VARIANTS):
        data = base.model_dump()
        data.update(architecture="ttm", summarizer=summarizer, write=write)
        data["processor"]["kind"] = kind
        variants.append((f"{summarizer}/{kind}/{write}", TTMConfig.model_validate(data)))
    return variants


def load_descriptor(path: Union[str, Path]) -> Descriptor:
    """A FLOPs descriptor file: a run config, a bare model config or a reference config."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from e
    try:
        if data.get("architecture") in ("causal_transformer", "temporal_window"):
            return ReferenceConfig.model_validate(data)
        if "model" in data:
            return load_run_config(path).model
        return TTMConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"{path}: {format_validation_error(e)}") from e


class ExperimentRunner:
    """Runs the TTM workflows and places every artifact under one output directory."""

    def __init__(self, output_dir: Optional[str] = None, show_progress: bool = True):
        """
        Args:
            output_dir: Artifact directory; overrides ``io.output_dir`` of run configs
            show_progress: Show tqdm progress bars during training
        """
        self.output_dir = output_dir
        self.show_progress = show_progress

    def _out(self, run_config: Optional[RunConfig] = None, fallback: Optional[Path] = None) -> Path:
        if self.output_dir:
            out = Path(self.output_dir)
        elif run_config is not None:
            out = Path(run_config.io.output_dir)
        else:
            out = fallback or Path(config.TTM_OUTPUT_DIR)
        out.mkdir(parents=True, exist_ok=True)
        return out

    def generate(self, run_config: RunConfig, count: Optional[int] = None) -> Path:
        """Write the held-out corpus a training run with this config evaluates on."""
        count = count or run_config.train.eval_episodes
        episodes = generate_corpus(run_config.task, count, run_config.train.seed, stream=EVAL_STREAM)
        path = self._out(run_config) / "corpus.jsonl"
        save_corpus(path, episodes)
        return path

    def train(self, run_config: RunConfig) -> TrainResult:
        out = self._out(run_config)
        logger.info(f"Starting training run in {out}")
        return train(run_config, output_dir=str(out), show_progress=self.show_progress)

    def evaluate(self, checkpoint: Union[str, Path], corpus: Union[str, Path],
                 dump_weights: Optional[Union[str, Path]] = None) -> Dict:
        """
        Evaluate a checkpoint on a corpus and write ``eval.json``.

        Args:
            checkpoint: Checkpoint directory
            corpus: ``.jsonl`` corpus
            dump_weights: Optional directory for per-step read/write weight CSVs
                of the first episode

        Returns:
            Metrics dict (loss, accuracy, count, step)
        """
        logger.info("Step 1: Loading checkpoint")
        model, manifest = load_checkpoint(checkpoint)
        logger.info("Step 2: Loading corpus")
        episodes = load_corpus(corpus)
        logger.info(f"Step 3: Evaluating {len(episodes)} episodes")
        result = evaluate(model, episodes, manifest.run_config.train)
        metrics = {"loss": result.loss, "accuracy": result.accuracy, "count": result.count,
                   "step": manifest.step, "checkpoint": str(checkpoint), "corpus": str(corpus)}
        out = self._out(fallback=Path(checkpoint).parent)
        (out / "eval.json").write_text(json.dumps(metrics, indent=2, sort_keys=True), encoding="utf-8")
        logger.info(f"Eval accuracy {result.accuracy:.4f} (loss {result.loss:.4f}) over {result.count} targets")
        if dump_weights:
            self.dump_weights(model, episodes[0], dump_weights)
        return metrics

    def dump_weights(self, model: RecurrentModel, episode, directory: Union[str, Path]) -> List[Path]:
        """One CSV per step and kind (read / write) holding the importance-weight matrix."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        symbols, _ = collate([episode])
        with no_grad():
            outputs, _ = model.forward_symbols(symbols)
        written = []
        for t, out in enumerate(outputs, start=1):
            for kind, weights in (("read", out.read_weights), ("write", out.write_weights)):
                if weights is None:
                    continue
                path = directory / f"{kind}_step{t}.csv"
                with path.open("w", newline="", encoding="utf-8") as fh:
                    csv.writer(fh).writerows(np.round(weights.data[0], 8).tolist())
                written.append(path)
        if not written:
            logger.warning(f"{model.config.architecture}/{model.config.write} records no importance weights")
        logger.info(f"Wrote {len(written)} weight matrices to {directory}")
        return written

    def gradcheck(self, run_config: RunConfig, all_variants: bool = False,
                  all_entries: bool = False) -> Dict[str, GradCheckReport]:
        """
        Finite-difference check of the last-step loss in 64-bit mode.

        Parameters are perturbed first (gradcheck.perturb_parameters). Each tensor
        is sampled at config.GRADCHECK_MAX_ENTRIES entries unless ``all_entries``.

        Returns:
            Report per checked variant (label → report)
        """
        variants = variant_matrix(run_config.model) if all_variants else [("config", run_config.model)]
        episodes = generate_corpus(run_config.task, GRADCHECK_BATCH, run_config.train.seed, stream=EVAL_STREAM)
        symbols, targets = collate(episodes)
        reports: Dict[str, GradCheckReport] = {}
        with precision(np.float64):
            for label, model_cfg in variants:
                model = build_model(model_cfg, seed=run_config.train.seed)
                perturb_parameters(model.store, seed=run_config.train.seed)

                def loss_fn(model=model):
                    value, _, _ = episode_loss(model, symbols, targets, run_config.train)
                    return value

                max_entries = None if all_entries else config.GRADCHECK_MAX_ENTRIES
                report = grad_check(loss_fn, model.store, max_entries=max_entries,
                                    seed=run_config.train.seed)
                reports[label] = report
                level = logging.INFO if report.passed else logging.ERROR
                coverage = f"{report.checked} of {report.total} entries" + (" sampled" if report.sampled else "")
                logger.log(level, f"gradcheck {label}: max rel err {report.max_rel_err:.3e} "
                                  f"({report.worst_param}, {coverage}) {'PASS' if report.passed else 'FAIL'}")
        out = self._out(run_config)
        (out / "gradcheck.json").write_text(
            json.dumps({label: rep.to_dict() for label, rep in reports.items()}, indent=2, sort_keys=True),
            encoding="utf-8",
        )
        return reports

    def flops(self, config_paths: Sequence[Union[str, Path]], steps: Sequence[int] = (1,)) -> Tuple[Path, List[CostReport]]:
        """Rank the per-step FLOPs of every descriptor file and write ``flops.csv``."""
        if not config_paths:
            raise UsageError("flops needs at least one config")
        descriptors = [(Path(p).stem, load_descriptor(p)) for p in config_paths]
        reports = compare(descriptors, steps)
        path = self._out() / "flops.csv"
        path.write_text(ranking_csv(reports), encoding="utf-8")
        for rep in reports:
            logger.info(f"{rep.label} t={rep.t}: {rep.total} FLOPs/step, {rep.params} params")
        return path, reports

    def plot(self, metrics_path: Union[str, Path]) -> Path:
        metrics_path = Path(metrics_path)
        out = self._out(fallback=metrics_path.parent)
        return plot_metrics(metrics_path, out / "learning_curve.svg")

    def dump_memory(self, checkpoint: Union[str, Path], corpus: Union[str, Path], step: int,
                    episode: int = 0) -> Path:
        """
        Snapshot the recurrent state after ``step`` steps of one corpus episode
        (step 0 is the initial state).
        """
        model, _ = load_checkpoint(checkpoint)
        episodes = load_corpus(corpus)
        if not 0 <= episode < len(episodes):
            raise UsageError(f"Episode index {episode} outside corpus of {len(episodes)}")
        symbols, _ = collate([episodes[episode]])
        if not 0 <= step <= symbols.shape[1]:
            raise UsageError(f"Step {step} outside episode of {symbols.shape[1]} steps")
        with no_grad():
            state = model.initial_state(1)
            for t in range(step):
                _, state = model.step(state, model.embed(symbols[:, t, :]))
        if state.memory is not None:
            snapshot = state.memory.to_numpy()[0]
        else:
            snapshot = np.stack([state.hidden.data[0], state.cell.data[0]])
        out = self._out(fallback=Path(checkpoint).parent)
        path = out / f"memory_ep{episode}_step{step}.bin"
        save_memory_snapshot(path, snapshot)
        return path
