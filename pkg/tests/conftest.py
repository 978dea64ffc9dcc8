import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT))

from src.run_config import RunConfig, TTMConfig, parse_run_config  # noqa: E402
from src.tensor import precision  # noqa: E402

CONFIG_DIR = ROOT / "configs"


@pytest.fixture
def float64():
    with precision(np.float64):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_model(**overrides) -> TTMConfig:
    """d=8, n=4, m=4, r=2, one block with two heads."""
    data = {
        "n": 4, "m": 4, "r": 2, "d": 8, "classes": 4, "vocab_size": 8,
        "processor": {"kind": "transformer", "depth": 1, "heads": 2},
    }
    processor = overrides.pop("processor", {})
    data["processor"].update(processor)
    data.update(overrides)
    return TTMConfig.model_validate(data)


def tiny_run(tmp_path: Path, model: dict = None, task: dict = None, train: dict = None) -> RunConfig:
    """Copy task with four tokens per step on the tiny model, writing under tmp_path."""
    data = {
        "model": {"n": 4, "m": 4, "r": 2, "d": 8, "classes": 4, "vocab_size": 8,
                  "processor": {"kind": "transformer", "depth": 1, "heads": 2}},
        "task": {"name": "copy", "steps": 4, "tokens_per_step": 4, "vocab": 4},
        "train": {"steps": 4, "batch": 4, "lr": 0.01, "eval_interval": 2, "eval_episodes": 8,
                  "eval_batch": 4, "seed": 0, "warmup": 0},
        "io": {"output_dir": str(tmp_path / "run")},
    }
    for section, extra in (("model", model), ("task", task), ("train", train)):
        if extra:
            data[section].update(extra)
    return parse_run_config(data)


@pytest.fixture
def tiny_model_config():
    return tiny_model


@pytest.fixture
def tiny_run_config():
    return tiny_run
