import numpy as np
import pytest

from src.baselines import LSTMBaseline, RecurrentTransformer
from src.errors import DimensionError, UsageError
from src.model import TokenTuringMachine, build_model
from src.tasks import collate, gen_copy
from src.tensor import Tensor


def _inputs(rng, batch=2, n=4, d=8, requires_grad=False):
    return Tensor(rng.normal(size=(batch, n, d)), requires_grad=requires_grad)


@pytest.mark.parametrize("write", ["ttm", "concat", "erase_add", "no_memory"])
def test_step_shapes(write, tiny_model_config, rng):
    model = build_model(tiny_model_config(write=write))
    assert isinstance(model, TokenTuringMachine)
    out, state = model.step(model.initial_state(2), _inputs(rng))
    assert out.logits.shape == (2, 4)
    assert state.memory.tokens.shape == (2, 4, 8)
    assert state.step_index == 1
    assert state.memory.step_index == 1


def test_read_weights_cover_memory_and_inputs(tiny_model_config, rng):
    model = build_model(tiny_model_config())
    out, _ = model.step(model.initial_state(1), _inputs(rng, batch=1))
    assert out.read_weights.shape == (1, 2, 8)
    assert out.write_weights.shape == (1, 4, 10)
    np.testing.assert_allclose(out.read_weights.data.sum(axis=-1), 1.0, atol=1e-5)


def test_no_memory_forgets_previous_steps(float64, tiny_model_config, rng):
    model = build_model(tiny_model_config(write="no_memory"))
    a, b = _inputs(rng), _inputs(rng)
    out_a, state = model.step(model.initial_state(2), a)
    assert np.all(state.memory.tokens.data == 0)
    out_b_after_a, _ = model.step(state, b)
    out_b_fresh, _ = model.step(model.initial_state(2), b)
    np.testing.assert_allclose(out_b_after_a.logits.data, out_b_fresh.logits.data, atol=1e-12)


def test_memory_carries_information(float64, tiny_model_config, rng):
    model = build_model(tiny_model_config())
    b = _inputs(rng)
    _, after_first = model.step(model.initial_state(2), _inputs(rng))
    _, after_other = model.step(model.initial_state(2), _inputs(rng))
    out_first, _ = model.step(after_first, b)
    out_other, _ = model.step(after_other, b)
    assert not np.allclose(out_first.logits.data, out_other.logits.data)


def test_unroll_composes_steps(float64, tiny_model_config, rng):
    model = build_model(tiny_model_config())
    x1, x2 = _inputs(rng), _inputs(rng)
    outputs, final = model.unroll([x1, x2])
    first, state = model.step(model.initial_state(2), x1)
    second, state = model.step(state, x2)
    np.testing.assert_allclose(outputs[0].logits.data, first.logits.data, atol=1e-12)
    np.testing.assert_allclose(outputs[1].logits.data, second.logits.data, atol=1e-12)
    np.testing.assert_allclose(final.memory.tokens.data, state.memory.tokens.data, atol=1e-12)
    assert final.step_index == 2


def test_single_step_unroll_equals_step(float64, tiny_model_config, rng):
    model = build_model(tiny_model_config())
    x = _inputs(rng)
    outputs, _ = model.unroll([x])
    single, _ = model.step(model.initial_state(2), x)
    np.testing.assert_allclose(outputs[0].logits.data, single.logits.data, atol=1e-12)


def test_segments_truncate_gradients(float64, tiny_model_config, rng):
    model = build_model(tiny_model_config())
    inputs = [_inputs(rng, requires_grad=True) for _ in range(2)]
    outputs, _ = model.unroll_segments(inputs, segment_length=1, carry="carry")
    outputs[1].logits.sum().backward()
    assert inputs[0].grad is None
    assert inputs[1].grad is not None

    inputs = [_inputs(rng, requires_grad=True) for _ in range(2)]
    outputs, _ = model.unroll_segments(inputs)
    outputs[1].logits.sum().backward()
    assert inputs[0].grad is not None


def test_configured_unroll_window_truncates_gradients(float64, tiny_model_config, rng):
    model = build_model(tiny_model_config(unroll=1))
    inputs = [_inputs(rng, requires_grad=True) for _ in range(3)]
    outputs, _ = model.unroll_segments(inputs)
    outputs[2].logits.sum().backward()
    assert inputs[0].grad is None and inputs[1].grad is None
    assert inputs[2].grad is not None


def test_forward_symbols_follows_unroll_window(float64, tiny_model_config):
    symbols, _ = collate([gen_copy(4, 4, 4, seed=s) for s in range(2)])
    windowed = build_model(tiny_model_config(unroll=2), seed=3)
    full = build_model(tiny_model_config(), seed=3)
    windowed_out, _ = windowed.forward_symbols(symbols)
    full_out, _ = full.forward_symbols(symbols)
    # values match; only the gradient path is cut
    for a, b in zip(windowed_out, full_out):
        np.testing.assert_allclose(a.logits.data, b.logits.data, atol=1e-12)

    windowed_out[-1].logits.sum().backward()
    full_out[-1].logits.sum().backward()
    cut = windowed.store["embedding.table"].grad
    whole = full.store["embedding.table"].grad
    assert not np.allclose(cut, whole)


def test_reset_segments_restart_from_initial_state(float64, tiny_model_config, rng):
    model = build_model(tiny_model_config())
    x1, x2 = _inputs(rng), _inputs(rng)
    outputs, _ = model.unroll_segments([x1, x2], segment_length=1, carry="reset")
    fresh, _ = model.step(model.initial_state(2), x2)
    np.testing.assert_allclose(outputs[1].logits.data, fresh.logits.data, atol=1e-12)


def test_unknown_carry_mode(tiny_model_config, rng):
    model = build_model(tiny_model_config())
    with pytest.raises(UsageError):
        model.unroll_segments([_inputs(rng)], carry="keep")


def test_empty_unroll_rejected(tiny_model_config):
    model = build_model(tiny_model_config())
    with pytest.raises(UsageError):
        model.unroll([])


@pytest.mark.parametrize("write,reaches", [("ttm", True), ("no_memory", False)])
def test_write_parameters_receive_gradient_through_memory(write, reaches, float64, tiny_model_config, rng):
    model = build_model(tiny_model_config(write=write))
    outputs, _ = model.unroll([_inputs(rng), _inputs(rng)])
    (outputs[0].logits.sum() + outputs[1].logits.sum()).backward()
    grad = model.store["write.summarizer.mlp.fc1.weight"].grad
    if reaches:
        assert grad is not None and np.abs(grad).sum() > 0
    else:
        assert grad is None or np.all(grad == 0)


def test_wrong_input_shape(tiny_model_config, rng):
    model = build_model(tiny_model_config())
    with pytest.raises(DimensionError):
        model.step(model.initial_state(2), _inputs(rng, n=3))


def test_state_batch_mismatch(tiny_model_config, rng):
    model = build_model(tiny_model_config())
    with pytest.raises(DimensionError):
        model.step(model.initial_state(3), _inputs(rng, batch=2))


def test_learned_memory_init(tiny_model_config):
    model = build_model(tiny_model_config(learned_memory_init=True))
    assert "memory.init" in model.store
    model.store["memory.init"].data[...] = 1.0
    assert np.all(model.initial_state(2).memory.tokens.data == 1.0)
    assert "memory.init" not in build_model(tiny_model_config()).store


def test_same_seed_same_parameters(tiny_model_config):
    first = build_model(tiny_model_config(), seed=5).store.state_dict()
    second = build_model(tiny_model_config(), seed=5).store.state_dict()
    assert first.keys() == second.keys()
    for name in first:
        np.testing.assert_array_equal(first[name], second[name])


def test_forward_symbols(tiny_model_config):
    model = build_model(tiny_model_config())
    symbols, _ = collate([gen_copy(3, 4, 4, seed=s) for s in range(5)])
    outputs, state = model.forward_symbols(symbols)
    assert len(outputs) == 3
    assert outputs[-1].logits.shape == (5, 4)
    assert state.step_index == 3


class TestLSTMBaseline:
    def test_zero_weights_keep_zero_state(self, tiny_model_config, rng):
        model = build_model(tiny_model_config(architecture="lstm"))
        assert isinstance(model, LSTMBaseline)
        for _, param in model.store.items():
            param.data[...] = 0.0
        state = model.initial_state(2)
        for _ in range(3):
            out, state = model.step(state, _inputs(rng))
        assert np.all(state.hidden.data == 0)
        assert np.all(state.cell.data == 0)
        assert np.all(out.logits.data == 0)

    def test_state_shapes(self, tiny_model_config, rng):
        model = build_model(tiny_model_config(architecture="lstm"))
        out, state = model.step(model.initial_state(2), _inputs(rng))
        assert out.logits.shape == (2, 4)
        assert state.hidden.shape == (2, 8)
        assert state.memory is None


class TestRecurrentTransformer:
    def test_processor_sees_state_and_inputs(self, tiny_model_config, rng):
        cfg = tiny_model_config(architecture="recurrent_transformer", n=16, state_tokens=16,
                                processor={"kind": "mixer"})
        model = build_model(cfg)
        assert isinstance(model, RecurrentTransformer)
        assert model.processor.tokens == 32
        out, state = model.step(model.initial_state(1), _inputs(rng, batch=1, n=16))
        assert out.logits.shape == (1, 4)
        assert state.memory.tokens.shape == (1, 16, 8)

    def test_state_carries_information(self, float64, tiny_model_config, rng):
        model = build_model(tiny_model_config(architecture="recurrent_transformer", state_tokens=3))
        b = _inputs(rng)
        _, first = model.step(model.initial_state(2), _inputs(rng))
        _, other = model.step(model.initial_state(2), _inputs(rng))
        assert not np.allclose(model.step(first, b)[0].logits.data, model.step(other, b)[0].logits.data)
