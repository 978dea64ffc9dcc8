import math

import numpy as np
import pytest

from src.errors import CapacityError, ConfigError, DimensionError, UnsupportedVariantError
from src.params import ParamStore
from src.summarizer import PositionalTable, TokenSummarizer, pooling_matrix
from src.tensor import Tensor


def _np_softmax(x, axis=-1):
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


@pytest.mark.parametrize("variant", ["mlp", "latent_query"])
def test_weights_are_row_distributions(variant, rng):
    summarizer = TokenSummarizer(ParamStore(seed=1), "s", variant, k=3, d=6)
    weights = summarizer.importance_weights(Tensor(rng.normal(size=(2, 7, 6)))).data
    assert weights.shape == (2, 3, 7)
    assert np.all(weights > 0)
    np.testing.assert_allclose(weights.sum(axis=-1), 1.0, atol=1e-5)


@pytest.mark.parametrize("variant", ["mlp", "latent_query", "pooling"])
def test_output_shape(variant, rng):
    summarizer = TokenSummarizer(ParamStore(seed=1), "s", variant, k=4, d=5)
    result = summarizer(Tensor(rng.normal(size=(3, 9, 5))))
    assert result.tokens.shape == (3, 4, 5)
    assert (result.weights is None) == (variant == "pooling")


class TestPooling:
    def test_groups_differ_by_at_most_one(self):
        matrix = pooling_matrix(3, 7)
        sizes = (matrix > 0).sum(axis=1)
        assert sorted(sizes.tolist()) == [2, 2, 3]
        np.testing.assert_allclose(matrix.sum(axis=1), 1.0)
        # every input token lands in exactly one group
        assert np.all((matrix > 0).sum(axis=0) == 1)

    def test_groups_are_contiguous_means(self, float64):
        summarizer = TokenSummarizer(ParamStore(), "s", "pooling", k=2, d=1)
        V = Tensor(np.arange(4.0).reshape(1, 4, 1))
        np.testing.assert_allclose(summarizer(V).tokens.data.reshape(-1), [0.5, 2.5])

    def test_more_outputs_than_inputs_rejected(self):
        with pytest.raises(ConfigError):
            pooling_matrix(5, 4)

    def test_has_no_importance_weights(self, rng):
        summarizer = TokenSummarizer(ParamStore(), "s", "pooling", k=2, d=3)
        with pytest.raises(UnsupportedVariantError):
            summarizer.importance_weights(Tensor(rng.normal(size=(1, 4, 3))))


@pytest.mark.parametrize("variant", ["mlp", "latent_query"])
def test_token_order_does_not_matter_without_positions(variant, float64):
    rng = np.random.default_rng(7)
    summarizer = TokenSummarizer(ParamStore(seed=2), "s", variant, k=3, d=4)
    for _ in range(100):
        p = int(rng.integers(2, 9))
        V = rng.normal(size=(2, p, 4))
        perm = rng.permutation(p)
        original = summarizer(Tensor(V)).tokens.data
        permuted = summarizer(Tensor(V[:, perm, :])).tokens.data
        np.testing.assert_allclose(original, permuted, atol=1e-10)


def test_positions_break_permutation_invariance(float64, rng):
    store = ParamStore(seed=2)
    summarizer = TokenSummarizer(store, "s", "latent_query", k=2, d=4)
    positions = PositionalTable(store, "pos", 5, 4)
    positions.table.data[...] = rng.normal(scale=1.0, size=(5, 4))
    V = rng.normal(size=(1, 5, 4))
    perm = np.array([4, 3, 2, 1, 0])
    original = summarizer(positions(Tensor(V))).tokens.data
    permuted = summarizer(positions(Tensor(V[:, perm, :]))).tokens.data
    assert not np.allclose(original, permuted)


def test_latent_query_matches_closed_form(float64, rng):
    store = ParamStore(seed=5)
    summarizer = TokenSummarizer(store, "s", "latent_query", k=2, d=3)
    V = rng.normal(size=(2, 4, 3))
    Q = store["s.query"].data
    weights = _np_softmax(np.einsum("kd,bpd->bkp", Q, V) / math.sqrt(3))
    expected = np.einsum("bkp,bpd->bkd", weights, V)
    result = summarizer(Tensor(V))
    np.testing.assert_allclose(result.weights.data, weights, atol=1e-12)
    np.testing.assert_allclose(result.tokens.data, expected, atol=1e-12)


def test_single_input_token_is_copied(float64, rng):
    summarizer = TokenSummarizer(ParamStore(), "s", "mlp", k=3, d=4)
    V = rng.normal(size=(1, 1, 4))
    np.testing.assert_allclose(summarizer(Tensor(V)).tokens.data, np.repeat(V, 3, axis=1), atol=1e-12)


def test_unknown_variant_rejected():
    with pytest.raises(UnsupportedVariantError):
        TokenSummarizer(ParamStore(), "s", "attention_pool", k=2, d=4)


def test_channel_mismatch_rejected(rng):
    summarizer = TokenSummarizer(ParamStore(), "s", "mlp", k=2, d=4)
    with pytest.raises(DimensionError):
        summarizer(Tensor(rng.normal(size=(1, 3, 5))))


def test_positional_table_capacity(rng):
    positions = PositionalTable(ParamStore(), "pos", 3, 2)
    assert positions(Tensor(rng.normal(size=(1, 2, 2)))).shape == (1, 2, 2)
    with pytest.raises(CapacityError):
        positions(Tensor(rng.normal(size=(1, 4, 2))))
