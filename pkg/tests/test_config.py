import pytest

from src.config import hparams as hp
from src.utils.errors import ConfigError


def test_defaults_load():
    config = hp.load_config()
    assert config.retrieval.b == 30
    assert config.embedder.dimension == 256


def test_overrides_apply():
    config = hp.load_config(overrides=["retrieval.b=5", "retrieval.n_i=2"])
    assert (config.retrieval.b, config.retrieval.n_i) == (5, 2)


@pytest.mark.parametrize("override", ["retrieval.bogus=1", "nonsense.key=2"])
def test_unknown_keys_rejected(override):
    with pytest.raises(ConfigError):
        hp.load_config(overrides=[override])


def test_unknown_keys_in_file_rejected(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text("retrieval:\n  b: 10\n  beam: 4\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        hp.load_config(str(path))


def test_missing_file_rejected(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        hp.load_config(str(tmp_path / "absent.yaml"))


def test_environment_overrides_urls(monkeypatch):
    monkeypatch.setenv(hp.ENV_EMBEDDER_URL, "http://embed.local:9000")
    monkeypatch.setenv(hp.ENV_LLM_URL, "http://llm.local/v1")
    config = hp.load_config()
    assert config.embedder.service_url == "http://embed.local:9000"
    assert config.decomposer.llm_url == "http://llm.local/v1"
