import json

import pytest

from svol.config import RunConfig, load_config, parse_override, set_path
from svol.errors import ConfigError


def test_defaults_validate():
    cfg = RunConfig().validate()
    assert cfg.schedule.iterations == 2000 and cfg.schedule.decay_step == 1500 and cfg.batch_size == 8
    assert (cfg.loss.l1, cfg.loss.iou, cfg.loss.obj) == (5.0, 1.0, 2.0)


def test_shipped_toy_config_loads():
    from pathlib import Path

    cfg = load_config(Path(__file__).parents[1] / "configs" / "toy.json")
    assert (cfg.model.frames, cfg.model.slots, cfg.model.width, cfg.model.heads) == (8, 10, 32, 8)


def test_parse_override():
    assert parse_override("optim.lr=1e-3") == ("optim.lr", 1e-3)
    assert parse_override("data.styles=[\"abstract\"]") == ("data.styles", ["abstract"])
    assert parse_override("matching=whole-video") == ("matching", "whole-video")
    with pytest.raises(ConfigError):
        parse_override("optim.lr")


def test_set_path_builds_sections():
    d = {}
    set_path(d, "a.b.c", 1)
    assert d == {"a": {"b": {"c": 1}}}
    with pytest.raises(ConfigError):
        set_path({"a": 3}, "a.b", 1)


def test_precedence(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"seed": 1, "optim": {"lr": 0.5}, "batch_size": 4}))
    cfg = load_config(path, ["seed=2", "optim.lr=0.25"], seed=3)
    assert (cfg.seed, cfg.optim.lr, cfg.batch_size) == (3, 0.25, 4)
    cfg = load_config(path, ["seed=2"], seed=None)
    assert cfg.seed == 2


@pytest.mark.parametrize("bad", [
    {"nope": 1},
    {"model": {"depth": 3}},
    {"model": {"width": 30, "heads": 8}},
    {"matching": "greedy"},
    {"batch_size": 0},
    {"protocol": {"mode": "dataset", "train_style": "abstract", "eval_style": "abstract"}},
    {"protocol": {"mode": "sideways"}},
    {"data": {"styles": ["sloppy"]}},
    {"data": {"max_objects": 20}},
    {"model": {"frames": 64}},
])
def test_invalid_configs(tmp_path, bad):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(bad))
    with pytest.raises(ConfigError):
        load_config(path)


def test_missing_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.json")
    (tmp_path / "broken.json").write_text("{")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "broken.json")
    with pytest.raises(ConfigError):
        load_config(None, [f"data.root={json.dumps(str(tmp_path))}"])


def test_round_trip():
    cfg = RunConfig()
    assert RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
