import dataclasses

import numpy as np
import pytest

from affordsim.cli import load_models, main, save_models
from affordsim.forward_models import PAPER_FM
from affordsim.config import PipelineConfig, config_from_text, config_to_text, experiment_config, train_models
from affordsim.simulation import ALL_CONDITIONS

SMALL = """# tiny grid
n_dead_ends 1
n_corridors 1
runs_per_scene 1
fm_collect.n_sequences 60
im_train.n_dead_ends 1
im_train.n_corridors 1
"""


def test_text_round_trip():
    cfg = PipelineConfig()
    assert config_from_text(config_to_text(cfg)) == cfg
    changed = dataclasses.replace(cfg, seed=7, use_corrector=False, bumper_radius=0.25)
    assert config_from_text(config_to_text(changed)) == changed


def test_overrides_and_comments():
    cfg = config_from_text("seed 5  # master\ncamera.max_range 4.0\n\nuse_corrector false\n")
    assert cfg.seed == 5 and cfg.camera.max_range == 4.0 and cfg.use_corrector is False


@pytest.mark.parametrize("text", ["no_such_key 1", "camera.nope 3", "seed.inner 2"])
def test_unknown_key(text):
    with pytest.raises(ValueError):
        config_from_text(text)


def test_bad_values():
    with pytest.raises(ValueError):
        config_from_text("use_corrector maybe")
    with pytest.raises(ValueError):
        config_from_text("seed x")


def test_experiment_config_mirrors_pipeline():
    cfg = config_from_text(SMALL)
    e = experiment_config(cfg)
    assert (e.n_dead_ends, e.n_corridors, e.runs_per_scene) == (1, 1, 1)
    assert e.conditions == ALL_CONDITIONS
    assert experiment_config(cfg, ALL_CONDITIONS[:2]).conditions == ALL_CONDITIONS[:2]


def test_published_coefficient_pipeline():
    cfg = config_from_text(SMALL + "paper_coefficients true\n")
    t = train_models(cfg)
    assert t.fm is PAPER_FM
    assert t.im is not None and len(t.im.modules) == 3


def test_save_load_models(tmp_path, trained):
    save_models(trained, tmp_path)
    back = load_models(tmp_path)
    assert back.fm.fwd == pytest.approx(trained.fm.fwd, abs=1e-12)
    assert back.tactile == trained.tactile and back.corrector == trained.corrector
    for a, b in zip(back.im.modules, trained.im.modules):
        np.testing.assert_array_equal(a.beta, b.beta)


@pytest.mark.slow
def test_cli_pipeline(tmp_path, capsys):
    cfg = tmp_path / "small.cfg"
    cfg.write_text(SMALL)
    common = ["--config", str(cfg), "--seed", "3"]
    d = lambda name: str(tmp_path / name)
    assert main(["gen-scenes", *common, "--out", d("scenes")]) == 0
    scenes = sorted((tmp_path / "scenes").iterdir())
    assert [p.name for p in scenes] == ["scene_000_DeadEnd.txt", "scene_001_Corridor.txt"]
    assert main(["collect-fm-data", *common, "--out", d("data")]) == 0
    assert main(["fit-fm", *common, "--out", d("models"), "--data", d("data/fm_data.txt")]) == 0
    assert main(["eval-fm", *common, "--out", d("eval"), "--models", d("models"),
                 "--data", d("data/fm_data.txt"), "--horizon", "10"]) == 0
    assert main(["train-im", *common, "--out", d("models"), "--models", d("models")]) == 0
    assert (tmp_path / "models" / "im.txt").exists()
    assert main(["simulate", *common, "--out", d("sim"), "--models", d("models"),
                 "--scene", str(scenes[1]), "--condition", "det/forward-continue/partial"]) == 0
    assert main(["render-birdseye", *common, "--out", d("sim/b.svg"), "--scene", str(scenes[1]),
                 "--trace", d("sim/trace.txt"), "--truth"]) == 0
    assert (tmp_path / "sim" / "b.svg").read_text().lstrip().startswith("<?xml")
    args = ["experiment", *common, "--models", d("models"), "--quiet", "--condition", "det/forward/full",
            "--condition", "random/none/partial"]
    assert main([*args, "--out", d("exp1")]) == 0
    assert main([*args, "--out", d("exp2"), "--workers", "2"]) == 0
    a = (tmp_path / "exp1" / "metrics.tsv").read_bytes()
    assert a == (tmp_path / "exp2" / "metrics.tsv").read_bytes()
    assert len((tmp_path / "exp1" / "runs.tsv").read_text().splitlines()) == 1 + 2 * 2
    capsys.readouterr()
