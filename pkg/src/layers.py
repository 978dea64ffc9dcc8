"""
Layers
Small parameterised building blocks shared by the summarizer, processing
unit and baselines.
"""
from .params import ParamStore
from .tensor import Tensor, gelu, layer_norm


class Linear:
    """Affine map x @ W (+ b) over the last axis."""

    def __init__(self, store: ParamStore, name: str, d_in: int, d_out: int, bias: bool = True):
        self.weight = store.create(f"{name}.weight", (d_in, d_out), init="xavier")
        self.bias = store.create(f"{name}.bias", (d_out,), init="zeros") if bias else None
        self.d_in = d_in
        self.d_out = d_out

    def __call__(self, x: Tensor) -> Tensor:
        y = x @ self.weight
        if self.bias is not None:
            y = y + self.bias
        return y


class LayerNorm:
    def __init__(self, store: ParamStore, name: str, d: int):
        self.gain = store.create(f"{name}.gain", (d,), init="ones")
        self.bias = store.create(f"{name}.bias", (d,), init="zeros")

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.bias)


class FeedForward:
    """Two-layer GELU MLP applied independently to every row."""

    def __init__(self, store: ParamStore, name: str, d_in: int, hidden: int, d_out: int, out_bias: bool = True):
        self.fc1 = Linear(store, f"{name}.fc1", d_in, hidden)
        self.fc2 = Linear(store, f"{name}.fc2", hidden, d_out, bias=out_bias)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(gelu(self.fc1(x)))
