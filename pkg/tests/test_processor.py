import numpy as np
import pytest

from src.errors import ConfigError, DimensionError
from src.params import ParamStore
from src.processor import OutputHead, ProcessingUnit, SelfAttention
from src.tensor import Tensor


def _unit(kind, tokens=4, d=8, depth=2, seed=0):
    return ProcessingUnit(ParamStore(seed=seed), kind, depth, tokens, d, hidden=16, heads=2)


@pytest.mark.parametrize("kind", ["transformer", "mixer", "mlp"])
def test_shape_preserved(kind, rng):
    out = _unit(kind)(Tensor(rng.normal(size=(3, 4, 8))))
    assert out.shape == (3, 4, 8)


def test_transformer_accepts_any_token_count(rng):
    unit = _unit("transformer")
    assert unit(Tensor(rng.normal(size=(1, 7, 8)))).shape == (1, 7, 8)


def test_mixer_token_count_is_fixed(rng):
    unit = _unit("mixer", tokens=4)
    with pytest.raises(ConfigError):
        unit(Tensor(rng.normal(size=(1, 5, 8))))


def test_heads_must_divide_channels():
    with pytest.raises(ConfigError):
        SelfAttention(ParamStore(), "attn", d=6, heads=4)


def test_unknown_kind_rejected():
    with pytest.raises(ConfigError):
        ProcessingUnit(ParamStore(), "gru", 1, 4, 8, hidden=16)


def test_wrong_channels_rejected(rng):
    with pytest.raises(DimensionError):
        _unit("mlp")(Tensor(rng.normal(size=(1, 4, 6))))


def test_transformer_is_permutation_equivariant(float64, rng):
    unit = _unit("transformer")
    x = rng.normal(size=(2, 5, 8))
    perm = rng.permutation(5)
    out = unit(Tensor(x)).data
    np.testing.assert_allclose(unit(Tensor(x[:, perm, :])).data, out[:, perm, :], atol=1e-10)


def test_mlp_processes_tokens_independently(float64, rng):
    unit = _unit("mlp")
    x = rng.normal(size=(1, 4, 8))
    changed = x.copy()
    changed[0, 2] += 1.0
    before, after = unit(Tensor(x)).data, unit(Tensor(changed)).data
    np.testing.assert_allclose(np.delete(after, 2, axis=1), np.delete(before, 2, axis=1), atol=1e-12)
    assert not np.allclose(after[0, 2], before[0, 2])


def test_mixer_mixes_tokens(float64, rng):
    unit = _unit("mixer")
    x = rng.normal(size=(1, 4, 8))
    changed = x.copy()
    # a constant shift would be removed by the pre-mixing layer norm
    changed[0, 2] = rng.normal(size=8)
    assert not np.allclose(unit(Tensor(changed)).data[0, 0], unit(Tensor(x)).data[0, 0])


class TestOutputHead:
    def test_mean_pooling(self, float64, rng):
        store = ParamStore(seed=2)
        head = OutputHead(store, d=3, classes=2)
        O = rng.normal(size=(2, 4, 3))
        expected = O.mean(axis=1) @ store["head.weight"].data + store["head.bias"].data
        np.testing.assert_allclose(head(Tensor(O)).data, expected, atol=1e-12)

    def test_first_token_pooling(self, float64, rng):
        store = ParamStore(seed=2)
        head = OutputHead(store, d=3, classes=2, pooling="first")
        O = rng.normal(size=(2, 4, 3))
        expected = O[:, 0, :] @ store["head.weight"].data + store["head.bias"].data
        np.testing.assert_allclose(head(Tensor(O)).data, expected, atol=1e-12)

    def test_unknown_pooling_rejected(self):
        with pytest.raises(ConfigError):
            OutputHead(ParamStore(), d=3, classes=2, pooling="max")
