"""Bird's-eye SVGs of one dead end and one corridor classified by DET/FORWARD_CONTINUE/PARTIAL."""
import argparse
from pathlib import Path

import numpy as np

from affordsim.config import PipelineConfig, experiment_config, train_models
from affordsim.experiment import build_scene_set, initial_observation, render_birdseye
from affordsim.inverse_model import IMVariant
from affordsim.sensor import calibrate_width_distance
from affordsim.simulation import TaskCondition, run_simulation


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="figures")
    ap.add_argument("--truth", action="store_true", help="overlay ground-truth obstacles")
    args = ap.parse_args()
    cfg = PipelineConfig()
    ecfg = experiment_config(cfg)
    trained = train_models(cfg)
    cond = TaskCondition.parse("det/forward-continue/partial")
    models = trained.models(IMVariant.DET, cfg.use_corrector, cfg.camera)
    calib = calibrate_width_distance(cfg.camera, cfg.scenes.radius)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    scenes = build_scene_set(ecfg)
    picks = [0, ecfg.n_dead_ends]      # first dead end, first corridor
    for idx in picks:
        scene = scenes[idx]
        obs = initial_observation(scene, idx, ecfg)
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 6, idx]))
        run = run_simulation(obs, models, cond, cfg.criterion, rng)
        path = out / f"birdseye_{idx:03d}_{scene.label}.svg"
        render_birdseye(scene, run, obs, calib, path, cfg.camera, cfg.scenes.radius, args.truth, cfg.actuation)
        print(f"{path}: {scene.label} -> {run.classification} in {run.n_trials} trial(s)")


if __name__ == "__main__":
    main()
