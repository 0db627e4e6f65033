import json

import pytest

from avfce.config import PROFILES, ConfigError, ExperimentConfig, profile


def test_defaults_follow_reference_table():
    cfg = ExperimentConfig()
    assert cfg.train.iterations == 8000 and cfg.train.batch_size == 512
    assert cfg.train.lr == 1e-4 and cfg.train.warmup_steps == 500
    assert cfg.train.snr_grid_db == tuple(float(x) for x in range(-10, 31, 5))
    assert (cfg.flow.time_mean, cfg.flow.time_std, cfg.flow.mix_ratio) == (0.4, 1.0, 0.25)
    assert (cfg.data.n_rx, cfg.data.n_tx) == (16, 64)


def test_json_roundtrip(tmp_path):
    cfg = profile("reduced")
    path = tmp_path / "c.json"
    path.write_text(cfg.to_json())
    assert ExperimentConfig.load(path) == cfg
    assert json.loads(cfg.to_json()) == cfg.to_dict()


def test_partial_sections_take_defaults():
    cfg = ExperimentConfig.from_dict({"train": {"iterations": 3}})
    assert cfg.train.iterations == 3 and cfg.train.batch_size == 512


@pytest.mark.parametrize(
    "raw, match",
    [
        ({"training": {}}, "unknown config section"),
        ({"train": {"iteratons": 3}}, "unknown key.*iteratons"),
        ({"train": {"domain": "polar"}}, "invalid 'train'"),
        ({"backbone": {"kernel": 2}}, "invalid 'backbone'"),
        ({"data": {"kind": "rayleigh"}}, "invalid 'data'"),
        ({"flow": []}, "must be an object"),
        ([], "JSON object"),
    ],
)
def test_strict_rejection(raw, match):
    with pytest.raises(ConfigError, match=match):
        ExperimentConfig.from_dict(raw)


def test_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{nope")
    with pytest.raises(ConfigError, match="not valid JSON"):
        ExperimentConfig.load(path)


def test_replace_validates():
    with pytest.raises(ConfigError):
        profile("reduced").replace(train={"batch_size": 0})


def test_profiles():
    assert set(PROFILES) == {"full", "reduced", "desk"}
    assert profile("reduced").data.kind == "gaussian"
    assert profile("desk").data.kind == "clustered"
    with pytest.raises(ConfigError, match="unknown profile"):
        profile("huge")
