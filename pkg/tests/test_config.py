import pytest

from nasaswin.config import dump_config, load_config, parse_kv, split_config
from nasaswin.errors import ConfigurationError
from nasaswin.model import ModelConfig
from nasaswin.train import TrainConfig


def test_parse_comments_and_blanks():
    assert parse_kv("# hi\n\nlr = 0.01  # trailing\nSeed=3\n") == {"lr": "0.01", "seed": "3"}


def test_parse_errors_have_line_numbers():
    with pytest.raises(ConfigurationError, match=":2:"):
        parse_kv("lr=1\nnot a pair\n", "f.cfg")
    with pytest.raises(ConfigurationError, match="duplicate"):
        parse_kv("lr=1\nlr=2\n")


def test_split_aliases():
    m, t = split_config({"cmfe.embed_dim": "8", "cms.enabled": "false", "steps": "20", "nasa_span": "none", "lr": "0.5"})
    assert m.stage_dims == (8, 16, 32, 64) and m.nasa_span is None
    assert t.cms_enabled is False and t.max_steps == 20 and t.lr == 0.5


def test_embed_dim_conflict():
    with pytest.raises(ConfigurationError, match="conflicts"):
        split_config({"cmfe.embed_dim": "8", "stage_dims": "12,24,48,96"})


def test_unknown_key_and_bad_value():
    with pytest.raises(ConfigurationError, match="unknown key"):
        split_config({"learning_rate": "1"})
    with pytest.raises(ConfigurationError):
        split_config({"batch": "many"})
    with pytest.raises(ConfigurationError):
        split_config({"cms.enabled": "maybe"})


def test_dump_load_roundtrip(tmp_path):
    m, t = ModelConfig(nasa_span=(1, 4), window=2), TrainConfig(lr=0.003, max_steps=9, momentum=0.5)
    path = tmp_path / "c.cfg"
    path.write_text(dump_config(m, t))
    assert load_config(path) == (m, t)


def test_missing_config(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "none.cfg")
