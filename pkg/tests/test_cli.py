import json

import numpy as np
import pytest
import torch
from PIL import Image

from gnm import cli
from gnm.checkpoint import load_model
from gnm.data import to_tensor
from gnm.objective import NonFiniteLoss
from gnm.sampling import NeedsGNM, decompose, object_traverse, resample_zs
from gnm.scenegen import load_dataset

from conftest import CLASSIFIER, ROOT

DIGITS = ROOT / "data" / "digits"
MICRO = str(ROOT / "configs" / "micro.ini")
IMAGES = ["--mnist-images", str(DIGITS / "t10k-images-idx3-ubyte"),
          "--mnist-labels", str(DIGITS / "t10k-labels-idx1-ubyte")]

pytestmark = pytest.mark.skipif(not DIGITS.is_dir(), reason="digit IDX files not built (scripts/make_digit_bank.py)")


def run(*args):
    return cli.main([str(a) for a in args])


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert run("gen-data", "--kind", "mnist4", "--count", 24, "--seed", 0, "--out", root / "data", *IMAGES) == 0
    assert run("--config", MICRO, "train", "--out", root / "run", "--data", root / "data") == 0
    return root


# -- gen-data --------------------------------------------------------------------


def test_gen_data_is_byte_deterministic(tmp_path):
    for d in ("a", "b"):
        assert run("gen-data", "--kind", "arrow2d", "--count", 3, "--seed", 4, "--out", tmp_path / d) == 0
    for f in sorted((tmp_path / "a").rglob("*.*")):
        assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes()


def test_gen_data_usage_errors(tmp_path):
    assert run("gen-data", "--kind", "mnist4", "--count", 2, "--out", tmp_path) == 2
    assert run("gen-data", "--kind", "mnist7", "--count", 2, "--out", tmp_path) == 2
    assert run("gen-data", "--kind", "arrow2d", "--count", 0, "--out", tmp_path) == 2
    assert run("gen-data", "--kind", "arrow2d") == 2


def test_gen_data_bad_idx(tmp_path):
    bad = tmp_path / "bad"
    bad.write_bytes(b"\x00\x00\x08\x01garbage")
    args = ["--mnist-images", bad, "--mnist-labels", DIGITS / "t10k-labels-idx1-ubyte"]
    assert run("gen-data", "--kind", "mnist4", "--count", 2, "--out", tmp_path / "o", *args) == 3
    assert run("gen-data", "--kind", "mnist4", "--count", 2, "--out", tmp_path / "o",
               "--mnist-images", tmp_path / "missing", "--mnist-labels", bad) == 3


# -- config ------------------------------------------------------------------------


def test_print_config(capsys):
    assert run("--config", MICRO, "--print-config") == 0
    assert "image_size = 16" in capsys.readouterr().out


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[train]\nlearning_rate = 1\n")
    assert run("--config", cfg, "--print-config") == 2
    assert "train.learning_rate" in capsys.readouterr().err


# -- train -------------------------------------------------------------------------


def test_train_outputs(workdir):
    run_dir = workdir / "run"
    lines = [json.loads(s) for s in (run_dir / "metrics.jsonl").read_text().splitlines()]
    assert [r["step"] for r in lines] == list(range(20))
    keys = {"step", "recon", "kl_g", "kl_b", "kl_s", "aux_b", "aux_o", "beta_g", "beta_b", "total", "wallclock_ms"}
    assert keys <= set(lines[0])
    assert (run_dir / "checkpoints" / "step_0000010.pt").is_file()
    assert (run_dir / "checkpoints" / "last.pt").is_file()
    assert (run_dir / "samples" / "step_0000020.png").is_file()


def test_resume_continues_identically(workdir, tmp_path):
    assert run("--config", MICRO, "train", "--out", tmp_path, "--data", workdir / "data", "--steps", 10) == 0
    assert run("--config", MICRO, "train", "--out", tmp_path, "--resume", tmp_path / "checkpoints" / "last.pt",
               "--data", workdir / "data") == 0

    def strip(path):
        return [{k: v for k, v in json.loads(s).items() if k != "wallclock_ms"}
                for s in path.read_text().splitlines()]
    assert strip(tmp_path / "metrics.jsonl") == strip(workdir / "run" / "metrics.jsonl")


def test_train_without_data(tmp_path):
    assert run("--config", MICRO, "train", "--out", tmp_path, "--data", tmp_path / "nothing") == 3


def test_non_finite_exit_code(monkeypatch, tmp_path, workdir):
    def boom(*a, **k):
        raise NonFiniteLoss("10 consecutive non-finite steps")
    monkeypatch.setattr(cli, "run_training", boom)
    assert run("--config", MICRO, "train", "--out", tmp_path, "--data", workdir / "data") == 4


def test_checkpoint_schema_mismatch(workdir, tmp_path):
    blob = torch.load(workdir / "run" / "checkpoints" / "last.pt", weights_only=False)
    blob["schema_version"] = 0
    torch.save(blob, tmp_path / "old.pt")
    assert run("sample", "--checkpoint", tmp_path / "old.pt", "--out", tmp_path / "s.png") == 5
    assert run("sample", "--checkpoint", tmp_path / "none.pt", "--out", tmp_path / "s.png") == 3


# -- sample / decompose / eval ----------------------------------------------------------


@pytest.mark.parametrize("mode", ["struct", "global-traverse", "object-traverse", "resample-zs"])
def test_sample_modes(workdir, tmp_path, mode):
    out = tmp_path / "grid.png"
    extra = ["--images", workdir / "data"] if mode == "object-traverse" else []
    assert run("sample", "--checkpoint", workdir / "run" / "checkpoints" / "last.pt", "--n", 25, "--mode", mode,
               "--out", out, *extra) == 0
    with Image.open(out) as im:
        assert im.size == (5 * 18 + 2, 5 * 18 + 2)


def test_object_traverse_needs_images(workdir, tmp_path):
    assert run("sample", "--checkpoint", workdir / "run" / "checkpoints" / "last.pt", "--mode", "object-traverse",
               "--out", tmp_path / "g.png") == 2


@pytest.fixture(scope="module")
def trained(workdir):
    model, cfg, step = load_model(workdir / "run" / "checkpoints" / "last.pt")
    ds = load_dataset(workdir / "data")
    return model, to_tensor(ds.images(range(4)), cfg.model.image_size)


def test_zero_sweep_reproduces_reconstruction(trained):
    model, x = trained
    from gnm.model import Noise
    recon, _ = model.reconstruct(x[:1], Noise(None), pres_mode="mode")
    tiles = object_traverse(model, x, 9, sweep=0.0)
    for t in tiles:
        torch.testing.assert_close(t, recon.x_tilde[0])


def test_resample_with_zero_std_is_constant(trained):
    model, x = trained
    tiles = resample_zs(model, 6, seed=3, std_scale=0.0)
    assert all(torch.equal(t, tiles[0]) for t in tiles)
    varied = resample_zs(model, 6, seed=3, std_scale=1.0)
    assert not all(torch.equal(t, varied[0]) for t in varied)
    with pytest.raises(ValueError):
        resample_zs(model, 2, source="posterior")


def test_decompose(trained, workdir, tmp_path):
    model, x = trained
    dec = decompose(model, x[:1])
    assert dec.boxes.shape == (dec.n_objects, 4)
    assert dec.panel.size[0] == (6 + dec.n_objects) * 18 + 2
    assert run("decompose", "--checkpoint", workdir / "run" / "checkpoints" / "last.pt", "--images",
               workdir / "data", "--out", tmp_path, "--n", 2) == 0
    assert (tmp_path / "panel_0001.png").is_file() and (tmp_path / "boxes_0001.csv").is_file()


def test_sampling_modes_need_gnm():
    from gnm.baselines import VariantConfig, build_variant
    from gnm.config import micro_model_config
    vae = build_variant(VariantConfig("VAE"), micro_model_config())
    with pytest.raises(NeedsGNM):
        resample_zs(vae, 2)


@pytest.mark.skipif(not CLASSIFIER.is_file(), reason="patch classifier artifact not built")
def test_eval_all_metrics(workdir, tmp_path):
    ckpt = workdir / "run" / "checkpoints" / "last.pt"
    assert run("eval", "--checkpoint", ckpt, "--dataset", workdir / "data", "--metrics", "s_acc,d_steps,ll,ap,probe",
               "--out", tmp_path, "--classifier", CLASSIFIER) == 0
    rep = json.loads((tmp_path / "eval_report.json").read_text())
    for key in ("s_acc", "d_steps", "ll", "ap_at_05", "ap_avg", "what_cls_acc"):
        assert rep[key] is not None
    assert np.isfinite(rep["ll"])


def test_eval_errors(workdir, tmp_path):
    ckpt = workdir / "run" / "checkpoints" / "last.pt"
    assert run("eval", "--checkpoint", ckpt, "--dataset", workdir / "data", "--metrics", "", "--out", tmp_path) == 2
    assert run("eval", "--checkpoint", ckpt, "--dataset", workdir / "data", "--metrics", "s_acc", "--out", tmp_path,
               "--classifier", tmp_path / "missing.pt") == 6
