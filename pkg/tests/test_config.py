import pytest

from gnm.config import ConfigError, RunConfig, load_config, micro_model_config


def test_defaults_validate():
    cfg = load_config()
    assert cfg.model.image_size == 128 and cfg.model.draw_steps == 4 and cfg.model.d_g == 32
    assert cfg.train.lr == 1e-4 and cfg.train.grad_clip == 1.0
    assert cfg.eval.iwae_k == 100 and cfg.eval.d_cap == 20_000


def test_ini_overrides_and_tuples():
    cfg = load_config(text="[model]\nimage_size = 64\nencoder_channels = 8, 16\n[train]\nsteps = 1_000\n")
    assert cfg.model.image_size == 64
    assert cfg.model.encoder_channels == (8, 16)
    assert cfg.train.steps == 1000


@pytest.mark.parametrize("text,key", [
    ("[model]\nimage_sise = 64\n", "model.image_sise"),
    ("[trian]\nsteps = 3\n", "trian"),
    ("[train]\nlr = fast\n", "train.lr"),
    ("[train]\nlr = -1\n", "train.lr"),
    ("[model]\nimage_size = 96\n", "model.image_size"),
    ("[model]\nrho = 1.5\n", "model.rho"),
    ("[model]\nkind = GNM_NOMLP\nd_g = 30\n", "model.d_g"),
])
def test_bad_config_names_the_key(text, key):
    with pytest.raises(ConfigError, match=key):
        load_config(text=text)


def test_dump_roundtrip():
    cfg = load_config(text="[model]\nimage_size = 64\n[eval]\nap_thresholds = 0.5, 0.75\n")
    again = load_config(text=cfg.dumps())
    assert again == cfg


def test_dict_roundtrip_is_strict():
    cfg = RunConfig()
    assert RunConfig.from_dict(cfg.to_dict()) == cfg
    d = cfg.to_dict()
    d["train"]["steps"] = "many"
    with pytest.raises(ConfigError):
        RunConfig.from_dict(d)


def test_micro_config():
    m = micro_model_config()
    assert m.image_size == 16 and m.grid == 2
    with pytest.raises(ConfigError):
        micro_model_config(glimpse_size=6)
