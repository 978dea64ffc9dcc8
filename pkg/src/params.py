"""
Parameter Store
Named, deterministically ordered collection of trainable tensors.
"""
import logging
import math
import zlib
from typing import Dict, Iterator, List, Sequence, Tuple

import numpy as np

from . import config
from .errors import CheckpointError, ConfigError
from .tensor import Tensor, get_default_dtype

logger = logging.getLogger(__name__)


class ParamStore:
    """Map from dotted path (e.g. ``read.summarizer.query``) to a trainable Tensor."""

    def __init__(self, seed: int = 0, shape_only: bool = False):
        """
        Initialize an empty store.

        Args:
            seed: Base seed; every parameter draws from its own stream derived
                from (seed, name), so initial values do not depend on creation order.
            shape_only: Register zero-filled parameters without drawing values
                (parameter counting for large architectures)
        """
        self.seed = seed
        self.shape_only = shape_only
        self._params: Dict[str, Tensor] = {}

    def _rng(self, name: str) -> np.random.Generator:
        return np.random.default_rng([self.seed, zlib.crc32(name.encode("utf-8"))])

    def create(self, name: str, shape: Sequence[int], init: str = "normal", scale: float = None) -> Tensor:
        """
        Create and register a parameter.

        Args:
            name: Unique dotted path
            shape: Parameter shape
            init: One of ``normal`` (std ``scale``), ``xavier`` (uniform Glorot on the
                last two dims), ``zeros``, ``ones``
            scale: Standard deviation for ``normal`` (default config.INIT_STD)

        Returns:
            The registered tensor (requires_grad=True)
        """
        if name in self._params:
            raise ConfigError(f"Duplicate parameter name: {name}")
        shape = tuple(int(s) for s in shape)
        if self.shape_only:
            param = Tensor(np.zeros(shape, dtype=get_default_dtype()), requires_grad=True)
            self._params[name] = param
            return param
        rng = self._rng(name)
        if init == "normal":
            values = rng.normal(0.0, config.INIT_STD if scale is None else scale, size=shape)
        elif init == "xavier":
            fan_in, fan_out = (shape[-2], shape[-1]) if len(shape) >= 2 else (shape[0], shape[0])
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            values = rng.uniform(-limit, limit, size=shape)
        elif init == "zeros":
            values = np.zeros(shape)
        elif init == "ones":
            values = np.ones(shape)
        else:
            raise ConfigError(f"Unknown init scheme '{init}' for {name}")
        param = Tensor(values.astype(get_default_dtype()), requires_grad=True)
        self._params[name] = param
        return param

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> List[str]:
        return sorted(self._params)

    def items(self) -> Iterator[Tuple[str, Tensor]]:
        for name in self.names():
            yield name, self._params[name]

    def zero_grad(self) -> None:
        for param in self._params.values():
            param.grad = None

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self._params.values()))

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Copy of every parameter array, keyed by name."""
        return {name: param.data.copy() for name, param in self.items()}

    def load_state_dict(self, arrays: Dict[str, np.ndarray]) -> None:
        """Overwrite parameter values in place; names and shapes must match exactly."""
        missing = sorted(set(self._params) - set(arrays))
        unexpected = sorted(set(arrays) - set(self._params))
        if missing or unexpected:
            raise CheckpointError(f"Parameter mismatch - missing: {missing}, unexpected: {unexpected}")
        for name, param in self._params.items():
            values = np.asarray(arrays[name])
            if values.shape != param.shape:
                raise CheckpointError(f"Shape mismatch for {name}: {values.shape} vs {param.shape}")
            param.data[...] = values.astype(param.dtype)
        logger.debug(f"Loaded {len(arrays)} parameter arrays")
