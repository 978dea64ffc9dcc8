import math

import numpy as np
import pytest

from src.errors import DimensionError
from src.memory import (
    EraseAddWriter, Memory, MemoryReader, MemoryWriter, erase_add_update, write_concat, zero_memory,
)
from src.params import ParamStore
from src.tensor import Tensor


def _np_gelu(x):
    return 0.5 * x * (1.0 + np.tanh(math.sqrt(2.0 / math.pi) * (x + 0.044715 * x ** 3)))


def _np_mlp_summary(store, prefix, pool):
    hidden = _np_gelu(pool @ store[f"{prefix}.mlp.fc1.weight"].data + store[f"{prefix}.mlp.fc1.bias"].data)
    logits = np.swapaxes(hidden @ store[f"{prefix}.mlp.fc2.weight"].data, -1, -2)
    weights = np.exp(logits - logits.max(axis=-1, keepdims=True))
    weights /= weights.sum(axis=-1, keepdims=True)
    return weights @ pool


@pytest.fixture
def small_operands(rng):
    M = rng.normal(size=(1, 2, 2))
    I = rng.normal(size=(1, 2, 2))
    O = rng.normal(size=(1, 1, 2))
    return M, I, O


def test_read_matches_closed_form(float64, small_operands):
    M, I, _ = small_operands
    store = ParamStore(seed=11)
    reader = MemoryReader(store, "mlp", m=2, n=2, r=1, d=2)
    pool = np.concatenate([M, I], axis=1) + store["read.positions"].data
    expected = _np_mlp_summary(store, "read.summarizer", pool)
    result = reader.read(Tensor(M), Tensor(I))
    assert result.tokens.shape == (1, 1, 2)
    np.testing.assert_allclose(result.tokens.data, expected, atol=1e-12)


def test_write_matches_closed_form(float64, small_operands):
    M, I, O = small_operands
    store = ParamStore(seed=12)
    writer = MemoryWriter(store, "mlp", m=2, n=2, r=1, d=2)
    pool = np.concatenate([M, O, I], axis=1) + store["write.positions"].data
    expected = _np_mlp_summary(store, "write.summarizer", pool)
    result = writer.write(Tensor(M), Tensor(O), Tensor(I))
    np.testing.assert_allclose(result.tokens.data, expected, atol=1e-12)


@pytest.mark.parametrize("variant", ["mlp", "latent_query", "pooling"])
def test_write_keeps_memory_size(variant):
    rng = np.random.default_rng(3)
    m, n, r, d = 5, 3, 2, 4
    writer = MemoryWriter(ParamStore(seed=1), variant, m, n, r, d)
    for _ in range(100):
        batch = int(rng.integers(1, 4))
        M = Tensor(rng.normal(size=(batch, m, d)))
        out = writer.write(M, Tensor(rng.normal(size=(batch, r, d))), Tensor(rng.normal(size=(batch, n, d))))
        assert out.tokens.shape == (batch, m, d)


def test_read_rejects_channel_mismatch(rng):
    reader = MemoryReader(ParamStore(), "mlp", m=2, n=2, r=1, d=2)
    with pytest.raises(DimensionError):
        reader.read(Tensor(rng.normal(size=(1, 2, 2))), Tensor(rng.normal(size=(1, 2, 3))))


def test_read_rejects_batch_mismatch(rng):
    reader = MemoryReader(ParamStore(), "mlp", m=2, n=2, r=1, d=2)
    with pytest.raises(DimensionError):
        reader.read(Tensor(rng.normal(size=(2, 2, 2))), Tensor(rng.normal(size=(1, 2, 2))))


class TestConcatWrite:
    def test_keeps_newest_tokens(self, float64):
        memory = Tensor(np.arange(6.0).reshape(1, 3, 2))
        inputs = Tensor(np.full((1, 2, 2), 9.0))
        out = write_concat(memory, inputs, capacity=3).data
        np.testing.assert_array_equal(out[0], [[4.0, 5.0], [9.0, 9.0], [9.0, 9.0]])

    def test_grows_until_capacity(self, float64):
        memory = Tensor(np.zeros((1, 0, 2)))
        out = write_concat(memory, Tensor(np.ones((1, 2, 2))), capacity=3)
        assert out.shape == (1, 2, 2)

    def test_more_inputs_than_capacity(self, float64):
        memory = Tensor(np.zeros((1, 1, 1)))
        inputs = Tensor(np.arange(4.0).reshape(1, 4, 1))
        out = write_concat(memory, inputs, capacity=2).data
        np.testing.assert_array_equal(out.reshape(-1), [2.0, 3.0])

    def test_fifo_bound_over_random_streams(self, float64):
        rng = np.random.default_rng(31)
        for _ in range(100):
            batch, m, n, d = (int(v) for v in rng.integers(1, 5, size=4))
            history = [np.zeros((batch, m, d))]
            memory = Tensor(history[0])
            for _ in range(int(rng.integers(1, 8))):
                inputs = rng.normal(size=(batch, n, d))
                history.append(inputs)
                memory = write_concat(memory, Tensor(inputs), capacity=m)
                assert memory.shape == (batch, m, d)
                np.testing.assert_array_equal(memory.data, np.concatenate(history, axis=1)[:, -m:, :])


def test_erase_add_hand_case(float64):
    memory = Tensor(np.ones((1, 2, 2)))
    address = Tensor(np.array([[[1.0], [0.0]]]))
    erase = Tensor(np.ones((1, 1, 2)))
    add = Tensor(np.array([[[5.0, 6.0]]]))
    out = erase_add_update(memory, address, erase, add).data
    np.testing.assert_allclose(out[0], [[5.0, 6.0], [1.0, 1.0]])


def test_erase_add_writer_shape_and_gradients(float64, rng):
    store = ParamStore(seed=4)
    writer = EraseAddWriter(store, d=3)
    memory = Tensor(rng.normal(size=(2, 4, 3)))
    outputs = Tensor(rng.normal(size=(2, 2, 3)))
    result = writer.write_erase_add(memory, outputs)
    assert result.tokens.shape == (2, 4, 3)
    result.tokens.sum().backward()
    assert store["write.erase_add.add.weight"].grad is not None


def test_zero_memory_is_detached(rng):
    tokens = Tensor(rng.normal(size=(1, 3, 2)), requires_grad=True)
    out = zero_memory(tokens * 2.0)
    assert not out.requires_grad
    assert np.all(out.data == 0)
    assert out.shape == (1, 3, 2)


def test_memory_snapshot_advances_step(rng):
    memory = Memory(tokens=Tensor(rng.normal(size=(1, 2, 2))))
    following = memory.advance(Tensor(np.zeros((1, 2, 2))))
    assert (memory.step_index, following.step_index) == (0, 1)
    assert (following.m, following.d) == (2, 2)
