"""Command-line entry point: ``affordsim <subcommand> [options]``."""
from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from pathlib import Path

import numpy as np

from .config import (PipelineConfig, TrainedModels, correction_dataset, experiment_config, load_config,
                     train_forward_models, train_models, training_scenes)
from .experiment import (build_scene_set, export_metrics, metrics_to_text,
                         records_to_text, render_birdseye, run_experiment)
from .forward_models import (calibrate_tactile_threshold, evaluate_fm_iterative, examples_from_sequences,
                             fit_prediction_corrector, fit_visual_fm, fm_from_text, fm_to_text, record_sequences,
                             sequences_from_text, sequences_to_text)
from .inverse_model import IMVariant, build_im_training_set, im_from_text, im_to_text, train_inverse_model
from .sensor import (calibrate_width_distance, correction_from_text, correction_to_text, degrade_observation,
                     fit_correction_model, project_scene)
from .simulation import (ALL_CONDITIONS, RunResult, TaskCondition, TrialResult, run_simulation,
                         trace_from_text, trace_to_text)
from .world import scene_from_text, scene_to_text


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.paper_coefficients:
        cfg = dataclasses.replace(cfg, paper_coefficients=True)
    return cfg


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def save_models(trained: TrainedModels, directory: Path) -> None:
    (directory / "fm.txt").write_text(fm_to_text(trained.fm, trained.tactile, trained.corrector))
    (directory / "correction.txt").write_text(correction_to_text(trained.correction))
    if trained.im is not None:
        (directory / "im.txt").write_text(im_to_text(trained.im))


def load_models(directory) -> TrainedModels:
    directory = Path(directory)
    fm, tactile, corrector = fm_from_text((directory / "fm.txt").read_text())
    trained = TrainedModels(fm, tactile, corrector, correction_from_text((directory / "correction.txt").read_text()))
    im_file = directory / "im.txt"
    if im_file.exists():
        trained.im = im_from_text(im_file.read_text())
    return trained


def _models(args, cfg) -> TrainedModels:
    if args.models:
        trained = load_models(args.models)
        if trained.im is None:
            sys.exit(f"{args.models}: no im.txt, run train-im first")
        return trained
    print("no --models given, training in-process", file=sys.stderr)
    return train_models(cfg)


def _conditions(args):
    if not args.condition:
        return ALL_CONDITIONS
    return tuple(TaskCondition.parse(c) for c in args.condition)


# --- subcommands -------------------------------------------------------------

def cmd_gen_scenes(args):
    cfg = _config(args)
    out = _out(args)
    for i, scene in enumerate(build_scene_set(experiment_config(cfg))):
        (out / f"scene_{i:03d}_{scene.label}.txt").write_text(scene_to_text(scene))
    print(f"wrote {cfg.n_dead_ends + cfg.n_corridors} scenes to {out}")


def cmd_collect_fm_data(args):
    cfg = _config(args)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2]))
    seqs = record_sequences(cfg.camera, cfg.fm_collect, rng, cfg.actuation)
    path = _out(args) / "fm_data.txt"
    path.write_text(sequences_to_text(seqs))
    print(f"{len(seqs)} sequences, {sum(len(s.commands) for s in seqs)} steps -> {path}")


def cmd_fit_fm(args):
    cfg = _config(args)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    if args.data and not cfg.paper_coefficients:
        data = examples_from_sequences(sequences_from_text(Path(args.data).read_text()))
        trained = TrainedModels(fit_visual_fm(data, cfg.camera.image_width),
                                calibrate_tactile_threshold(cfg.camera, cfg.bumper_radius, cfg.scenes.radius),
                                fit_prediction_corrector([e.segment for e in data]),
                                fit_correction_model(correction_dataset(cfg, rng), cfg.correction_y_split))
    else:
        trained = train_forward_models(cfg, rng)
    out = _out(args)
    save_models(trained, out)
    print(fm_to_text(trained.fm, trained.tactile, trained.corrector), end="")
    print(f"models written to {out}")


def cmd_eval_fm(args):
    cfg = _config(args)
    trained = load_models(args.models)
    if args.data:
        seqs = sequences_from_text(Path(args.data).read_text())
    else:
        seqs = record_sequences(cfg.camera, cfg.fm_collect,
                                np.random.default_rng(np.random.SeedSequence([cfg.seed, 3])), cfg.actuation)
    for name, corr in (("corrector off", None), ("corrector on", trained.corrector)):
        rep = evaluate_fm_iterative(trained.fm, corr, seqs, args.horizon)
        print(f"{name:14s} x {rep.x:8.3f}  y {rep.y:7.3f}  w {rep.w:7.3f}  (n={rep.n})")


def cmd_train_im(args):
    cfg = _config(args)
    trained = load_models(args.models)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 4]))
    im_cfg = dataclasses.replace(cfg.im_train, bumper_radius=cfg.bumper_radius)
    examples = build_im_training_set(training_scenes(cfg), trained.fm, trained.tactile, cfg.camera,
                                     im_cfg, rng, cfg.actuation)
    trained.im = train_inverse_model(examples, cfg.im_train.n_components)
    path = _out(args) / "im.txt"
    path.write_text(im_to_text(trained.im))
    print(f"{len(examples)} training examples -> {path}")


def cmd_simulate(args):
    cfg = _config(args)
    cond = _conditions(args)[0]
    trained = _models(args, cfg)
    scene = scene_from_text(Path(args.scene).read_text())
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 5]))
    obs = degrade_observation(project_scene(scene, scene.robot_start, cfg.camera), cfg.observation_noise, rng,
                              cfg.camera.image_width)
    models = trained.models(cond.im_variant, cfg.use_corrector, cfg.camera)
    run = run_simulation(obs, models, cond, cfg.criterion, rng, record=True)
    path = _out(args) / "trace.txt"
    path.write_text(trace_to_text(run, obs))
    print(f"{scene.label} scene classified as {run.classification} after {run.n_trials} trial(s), "
          f"{run.fm_invocations} FM invocations; trace -> {path}")


def cmd_experiment(args):
    cfg = _config(args)
    trained = _models(args, cfg)
    ecfg = experiment_config(cfg, _conditions(args))
    models = {v: trained.models(v, cfg.use_corrector, cfg.camera) for v in IMVariant}
    t0 = time.time()
    progress = (lambda c: print(f"  {c.label:32s} {time.time() - t0:7.1f}s", file=sys.stderr)) \
        if not args.quiet else None
    table = run_experiment(ecfg, models, progress, workers=args.workers)
    out = _out(args)
    export_metrics(table, out / f"metrics.{args.format}", args.format)
    (out / "runs.tsv").write_text(records_to_text(table.records))
    print(metrics_to_text(table), end="")


def cmd_render_birdseye(args):
    cfg = _config(args)
    scene = scene_from_text(Path(args.scene).read_text())
    run, initial = None, None
    if args.trace:
        parsed = trace_from_text(Path(args.trace).read_text())
        initial = parsed.initial
        trials = [TrialResult(seq, oc, 0, 0) for seq, oc in zip(parsed.trials, parsed.outcomes)]
        found = bool(parsed.outcomes) and parsed.outcomes[-1].value == "CorridorFound"
        run = RunResult("Corridor" if found else "DeadEnd", trials, 0, 0)
    if initial is None:
        initial = project_scene(scene, scene.robot_start, cfg.camera)
    calib = calibrate_width_distance(cfg.camera, cfg.scenes.radius)
    path = Path(args.out)
    if path.suffix != ".svg":
        path.mkdir(parents=True, exist_ok=True)
        path = path / "birdseye.svg"
    render_birdseye(scene, run, initial, calib, path, cfg.camera, cfg.scenes.radius, args.truth, cfg.actuation)
    print(f"wrote {path}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
    common.add_argument("--config", help="key-value config file")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--condition", action="append",
                        help="IM/anti-oscillation/restart, e.g. det/forward-continue/partial (repeatable)")
    common.add_argument("--paper-coefficients", action="store_true",
                        help="use the published FM and correction constants instead of synthetic fits")

    p = argparse.ArgumentParser(prog="affordsim", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sp = sub.add_parser("gen-scenes", parents=[common], help="write the evaluation scene set")
    sp.set_defaults(func=cmd_gen_scenes)
    sp = sub.add_parser("collect-fm-data", parents=[common], help="record random command walks")
    sp.set_defaults(func=cmd_collect_fm_data)
    sp = sub.add_parser("fit-fm", parents=[common], help="fit visual FM, corrector and correction model")
    sp.add_argument("--data", help="fm_data.txt from collect-fm-data (default: collect afresh)")
    sp.set_defaults(func=cmd_fit_fm)
    sp = sub.add_parser("eval-fm", parents=[common], help="iterative FM error with and without corrector")
    sp.add_argument("--models", required=True)
    sp.add_argument("--data")
    sp.add_argument("--horizon", type=int, default=50)
    sp.set_defaults(func=cmd_eval_fm)
    sp = sub.add_parser("train-im", parents=[common], help="build IM training data and fit PLS modules")
    sp.add_argument("--models", required=True, help="directory with fm.txt")
    sp.set_defaults(func=cmd_train_im)
    sp = sub.add_parser("simulate", parents=[common], help="classify one scene under one condition")
    sp.add_argument("--models")
    sp.add_argument("--scene", required=True)
    sp.set_defaults(func=cmd_simulate)
    sp = sub.add_parser("experiment", parents=[common], help="run the condition grid")
    sp.add_argument("--models")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--format", choices=("tsv", "csv"), default="tsv")
    sp.add_argument("--quiet", action="store_true")
    sp.set_defaults(func=cmd_experiment)
    sp = sub.add_parser("render-birdseye", parents=[common], help="SVG of perceived obstacles and trial paths")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--trace")
    sp.add_argument("--truth", action="store_true", help="overlay ground-truth obstacles")
    sp.set_defaults(func=cmd_render_birdseye)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
