import json

import pytest

from src.errors import ConfigError
from src.experiment import load_descriptor, variant_matrix
from src.flops import ReferenceConfig
from src.run_config import RunConfig, TTMConfig, canonical_json, load_run_config, parse_run_config
from src.trainer import train

from conftest import CONFIG_DIR


def _base():
    return {
        "model": {"n": 2, "m": 4, "r": 2, "d": 8, "classes": 4, "vocab_size": 8,
                  "processor": {"depth": 1, "heads": 2}},
        "task": {"name": "delayed_recall", "steps": 5, "gap": 2, "vocab": 4},
    }


def test_defaults_are_valid():
    cfg = RunConfig()
    assert cfg.model.n == cfg.task.tokens
    assert cfg.model.classes == cfg.task.vocab
    assert cfg.train.label_smoothing == 0.1
    assert cfg.model.unroll is None


def test_bare_model_defaults_are_full_size():
    cfg = TTMConfig()
    assert cfg.m == 96 and cfg.r == 16 and cfg.d == 512 and cfg.n == 16
    assert cfg.processor.depth == 4


def test_default_run_config_trains_as_is(tmp_path):
    data = RunConfig().model_dump()
    data["train"].update(steps=1, batch=2, eval_episodes=2, eval_batch=2)
    data["io"]["output_dir"] = str(tmp_path)
    result = train(parse_run_config(data), show_progress=False)
    assert result.steps == 1
    assert 0.0 <= result.eval_accuracy <= 1.0


def test_unknown_key_reports_its_path():
    data = _base()
    data["model"]["bogus"] = 1
    with pytest.raises(ConfigError) as excinfo:
        parse_run_config(data)
    assert "model.bogus" in str(excinfo.value)


def test_out_of_range_value_reports_its_path():
    data = _base()
    data["model"]["m"] = 0
    with pytest.raises(ConfigError) as excinfo:
        parse_run_config(data)
    assert "model.m" in str(excinfo.value)


@pytest.mark.parametrize("section,key,value,fragment", [
    ("model", "n", 3, "model.n"),
    ("model", "classes", 5, "model.classes"),
    ("model", "vocab_size", 7, "model.vocab_size"),
])
def test_cross_field_checks(section, key, value, fragment):
    data = _base()
    data[section][key] = value
    with pytest.raises(ConfigError) as excinfo:
        parse_run_config(data)
    assert fragment in str(excinfo.value)


def test_heads_must_divide_channels():
    with pytest.raises(ValueError):
        TTMConfig(d=6, processor={"heads": 4})


def test_pooling_read_needs_enough_tokens():
    with pytest.raises(ValueError):
        TTMConfig(summarizer="pooling", m=2, n=2, r=5)


def test_task_checks():
    data = _base()
    data["task"]["gap"] = 5
    with pytest.raises(ConfigError):
        parse_run_config(data)


def test_canonical_json_is_stable():
    cfg = parse_run_config(_base())
    text = canonical_json(cfg)
    assert canonical_json(parse_run_config(json.loads(text))) == text
    assert text == json.dumps(json.loads(text), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def test_overrides_use_dotted_paths(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(_base()), encoding="utf-8")
    cfg = load_run_config(path, {"train.seed": 7, "io.output_dir": "elsewhere"})
    assert cfg.train.seed == 7
    assert cfg.io.output_dir == "elsewhere"


def test_missing_and_invalid_files(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "absent.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_run_config(bad)


@pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_configs_load(path):
    descriptor = load_descriptor(path)
    assert isinstance(descriptor, (TTMConfig, ReferenceConfig))
    if "model" in json.loads(path.read_text(encoding="utf-8")):
        load_run_config(path)


def test_bare_model_descriptor(tmp_path):
    path = tmp_path / "model.json"
    path.write_text(json.dumps({"architecture": "lstm", "d": 16}), encoding="utf-8")
    assert load_descriptor(path).architecture == "lstm"
    path.write_text(json.dumps({"architecture": "temporal_window", "window": 0}), encoding="utf-8")
    with pytest.raises(ConfigError):
        load_descriptor(path)


def test_variant_matrix_covers_every_combination(tiny_model_config):
    variants = variant_matrix(tiny_model_config())
    assert len(variants) == 36
    assert len({label for label, _ in variants}) == 36
    assert ("pooling/mixer/erase_add" in dict(variants))
