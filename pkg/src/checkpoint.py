"""
Checkpoint Module
A checkpoint is a directory holding ``manifest.json`` (canonical JSON of the
run config, step count, seed and parameter names) and ``params.bin``.
"""
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple, Union

from .errors import CheckpointError, ConfigError
from .model import RecurrentModel, build_model
from .params import ParamStore
from .run_config import RunConfig, canonical_json, parse_run_config
from .serialization import FORMAT_VERSION, load_arrays, save_arrays

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"
PARAMS_FILE = "params.bin"


@dataclass
class Manifest:
    run_config: RunConfig
    step: int
    seed: int
    param_names: List[str]
    format_version: int = FORMAT_VERSION

    def to_dict(self) -> dict:
        return {
            "config": self.run_config.model_dump(mode="json"),
            "step": self.step,
            "seed": self.seed,
            "params": self.param_names,
            "format": self.format_version,
        }


def save_checkpoint(directory: Union[str, Path], run_config: RunConfig, store: ParamStore,
                    step: int, seed: int) -> Path:
    """Write manifest and parameters; returns the checkpoint directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(run_config, step, seed, store.names())
    (directory / MANIFEST_FILE).write_text(canonical_json(manifest.to_dict()), encoding="utf-8")
    save_arrays(directory / PARAMS_FILE, store.state_dict())
    logger.info(f"Checkpoint saved to {directory} (step {step}, {len(store)} tensors)")
    return directory


def read_manifest(directory: Union[str, Path]) -> Manifest:
    path = Path(directory) / MANIFEST_FILE
    if not path.exists():
        raise CheckpointError(f"Checkpoint manifest not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        run_config = parse_run_config(data["config"])
        return Manifest(run_config, int(data["step"]), int(data["seed"]), list(data["params"]),
                        int(data.get("format", FORMAT_VERSION)))
    except (KeyError, TypeError, ValueError, ConfigError) as e:
        raise CheckpointError(f"Malformed manifest {path}: {e}") from e


def load_checkpoint(directory: Union[str, Path]) -> Tuple[RecurrentModel, Manifest]:
    """Rebuild the model described by the manifest and load its parameters."""
    directory = Path(directory)
    if not directory.is_dir():
        raise CheckpointError(f"Checkpoint directory not found: {directory}")
    manifest = read_manifest(directory)
    model = build_model(manifest.run_config.model, seed=manifest.seed)
    arrays = load_arrays(directory / PARAMS_FILE)
    if sorted(arrays) != sorted(manifest.param_names):
        raise CheckpointError("params.bin does not match the parameter names in the manifest")
    model.store.load_state_dict(arrays)
    logger.info(f"Loaded checkpoint {directory} (step {manifest.step})")
    return model, manifest
