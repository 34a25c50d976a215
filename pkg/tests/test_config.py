import pytest

from coughscreen.config import ConfigError, config_from_dict, load_config


def write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_defaults():
    cfg = load_config()
    assert cfg.seed == 0
    assert cfg.split.test_fraction == 0.10
    assert cfg.split.cv_folds == 5
    assert cfg.features.correlation_threshold == 0.8
    assert cfg.cnn.patience == 15 and cfg.cnn.batch_size == 16 and cfg.cnn.lr == 0.001
    assert cfg.fairness.age_threshold == 58
    assert cfg.families == ("svm", "lr", "gbt")


def test_dotted_keys_and_overrides(tmp_path):
    p = write(tmp_path, 'seed = 7\nmanifest = "data/manifest.csv"\ncnn.max_epochs = 3\nshap.n_coalitions = 64\n')
    cfg = load_config(p, seed=11)
    assert cfg.seed == 11
    assert cfg.cnn.max_epochs == 3 and cfg.cnn.patience == 15
    assert cfg.shap.n_coalitions == 64
    assert cfg.manifest == str(tmp_path / "data" / "manifest.csv")


def test_none_override_keeps_file_value(tmp_path):
    cfg = load_config(write(tmp_path, "seed = 4\n"), seed=None)
    assert cfg.seed == 4


def test_grid_override_replaces_one_family():
    cfg = config_from_dict({"grid": {"lr": [{"l2": 0.5}]}})
    assert cfg.grid["lr"] == [{"l2": 0.5}]
    assert len(cfg.grid["svm"]) > 1


@pytest.mark.parametrize("raw", [
    {"bogus": 1},
    {"cnn": {"epochs": 5}},
    {"split": {"test_fraction": 1.5}},
    {"families": ["svm", "knn"]},
    {"grid": {"svm": []}},
    {"cnn": 3},
])
def test_invalid_configs(raw):
    with pytest.raises(ConfigError):
        config_from_dict(raw)


def test_malformed_toml(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, "seed = = 3\n"))


def test_digest_tracks_content():
    a, b = config_from_dict({"seed": 1}), config_from_dict({"seed": 1})
    assert a.digest() == b.digest()
    assert a.digest() != config_from_dict({"seed": 2}).digest()
